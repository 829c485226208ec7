//! Scalar fields living on the interior or boundary grid of a domain.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::grid::Grids;

/// Scalar field sampled at the interior grid nodes.
#[derive(Debug, Clone)]
pub struct InteriorField {
    grids: Arc<Grids>,
    values: Vec<f64>,
}

impl InteriorField {
    pub fn zeros(grids: Arc<Grids>) -> Self {
        let n = grids.interior.len();
        InteriorField {
            grids,
            values: vec![0.0; n],
        }
    }

    pub fn constant(grids: Arc<Grids>, value: f64) -> Self {
        let n = grids.interior.len();
        InteriorField {
            grids,
            values: vec![value; n],
        }
    }

    pub fn from_values(grids: Arc<Grids>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grids.interior.len() {
            return Err(Error::GridMismatch(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grids.interior.len()
            )));
        }
        Ok(InteriorField { grids, values })
    }

    pub fn from_fn(grids: Arc<Grids>, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = grids.interior.points().iter().map(|&p| f(p)).collect();
        InteriorField { grids, values }
    }

    pub fn grids(&self) -> &Arc<Grids> {
        &self.grids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Elementwise map returning a new field on the same grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        InteriorField {
            grids: self.grids.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub(crate) fn check_same_grid(&self, other: &InteriorField) -> Result<()> {
        if !self.grids.compatible(&other.grids) {
            return Err(Error::GridMismatch(
                "interior fields live on different grids".into(),
            ));
        }
        Ok(())
    }
}

/// Scalar function on the boundary grid nodes, such as a time budget `τ` or
/// a boundary distance function `r_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProfile {
    values: Vec<f64>,
}

impl BoundaryProfile {
    pub fn constant(n_nodes: usize, value: f64) -> Self {
        BoundaryProfile {
            values: vec![value; n_nodes],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("boundary profile"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("boundary profile contains non-finite values"));
        }
        Ok(BoundaryProfile { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, j: usize) -> f64 {
        self.values[j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set(&mut self, j: usize, v: f64) {
        self.values[j] = v;
    }

    /// Pointwise minimum with `other`.
    pub fn min_with(&self, other: &BoundaryProfile) -> Result<BoundaryProfile> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(
                "boundary profiles have different lengths".into(),
            ));
        }
        Ok(BoundaryProfile {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a.min(b))
                .collect(),
        })
    }

    /// Pointwise clamp of every value into `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> BoundaryProfile {
        BoundaryProfile {
            values: self.values.iter().map(|v| v.clamp(lo, hi)).collect(),
        }
    }

    /// Shift every value by `delta`.
    pub fn shift(&self, delta: f64) -> BoundaryProfile {
        BoundaryProfile {
            values: self.values.iter().map(|v| v + delta).collect(),
        }
    }

    /// Largest absolute difference to `other`.
    pub fn sup_distance(&self, other: &BoundaryProfile) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::GridMismatch(
                "boundary profiles have different lengths".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// True when every value is `<=` the matching value of `other`.
    pub fn le(&self, other: &BoundaryProfile) -> bool {
        self.len() == other.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(&a, &b)| a <= b)
    }
}
