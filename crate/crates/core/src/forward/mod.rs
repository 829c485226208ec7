//! Time-domain solver for the weighted Neumann wave problem.
//!
//! The interior equation is `u_tt = c(x)^2 Δu` with zero initial data; the
//! boundary source enters through the weighted Neumann condition
//! `c^{n-1} ∂_ν u = f`, and the observable is the boundary trace of `u` over
//! a horizon `2T`. Space is discretized in conservative form,
//!
//! ```text
//!     M u'' = -S u + B f,
//! ```
//!
//! with `M` the lumped natural-measure mass matrix (`c^{-2}` times the cell
//! weight), `S` the Neumann stiffness matrix of the plain Laplacian, and `B`
//! the adjoint of the boundary trace against the boundary measure. This is
//! exactly the structure that makes the interior and boundary inner products
//! dual to each other at the discrete level, so identities relating traces
//! to interior snapshots hold up to time-discretization error alone. Time
//! stepping is the classical leapfrog scheme, stable for CFL numbers
//! `c_max Δt / h` below [`CFL_LIMIT`].

mod device;
mod solver;

pub use device::{source_hash, MeasurementDevice, NoiseModel};

use crate::error::{Error, Result};
use crate::geometry::{InteriorField, SpeedField};

/// Largest admissible CFL number `c_max Δt / h`.
pub const CFL_LIMIT: f64 = 0.9;

/// Uniform time grid with nodes `t_k = k Δt` for `k = 0..=steps` covering
/// `[0, 2T]`; `steps` is even so that `t = T` is a grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        if steps < 2 || steps % 2 != 0 {
            return Err(Error::config(format!(
                "step count must be even and at least 2 so that t = T is a grid node, got {steps}"
            )));
        }
        Ok(TimeGrid { dt, steps })
    }

    /// Grid over `[0, 2T]` with the given even number of steps.
    pub fn from_horizon(two_t: f64, steps: usize) -> Result<Self> {
        if !(two_t.is_finite() && two_t > 0.0) {
            return Err(Error::config(format!(
                "time horizon must be positive, got {two_t}"
            )));
        }
        Self::new(two_t / steps as f64, steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps; the grid has `steps + 1` nodes.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_nodes(&self) -> usize {
        self.steps + 1
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Full horizon `2T`.
    pub fn two_t(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Control time `T`.
    pub fn horizon(&self) -> f64 {
        self.dt * (self.steps / 2) as f64
    }

    /// Index of the node at `t = T`.
    pub fn half_index(&self) -> usize {
        self.steps / 2
    }
}

/// Scalar field on the space-time boundary cylinder: one value per
/// `(time node, boundary node)` pair, stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    time: TimeGrid,
    n_boundary: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(time: TimeGrid, n_boundary: usize) -> Self {
        SpaceTimeField {
            time,
            n_boundary,
            values: vec![0.0; time.n_nodes() * n_boundary],
        }
    }

    /// Sample `f(t, j)` on the grid.
    pub fn from_fn(time: TimeGrid, n_boundary: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(time.n_nodes() * n_boundary);
        for k in 0..time.n_nodes() {
            let t = time.t(k);
            for j in 0..n_boundary {
                values.push(f(t, j));
            }
        }
        SpaceTimeField {
            time,
            n_boundary,
            values,
        }
    }

    pub fn from_values(time: TimeGrid, n_boundary: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != time.n_nodes() * n_boundary {
            return Err(Error::GridMismatch(format!(
                "{} values for {} time nodes x {} boundary nodes",
                values.len(),
                time.n_nodes(),
                n_boundary
            )));
        }
        Ok(SpaceTimeField {
            time,
            n_boundary,
            values,
        })
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn n_boundary(&self) -> usize {
        self.n_boundary
    }

    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.n_boundary + j]
    }

    pub fn set(&mut self, k: usize, j: usize, v: f64) {
        self.values[k * self.n_boundary + j] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_boundary..(k + 1) * self.n_boundary]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Elementwise map into a new field.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        SpaceTimeField {
            time: self.time,
            n_boundary: self.n_boundary,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpaceTimeField) -> Result<()> {
        self.check_same_layout(other)?;
        for (x, &y) in self.values.iter_mut().zip(&other.values) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.values.iter_mut() {
            *x *= a;
        }
    }

    pub fn sub(&self, other: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.check_same_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a - b)
            .collect();
        Ok(SpaceTimeField {
            time: self.time,
            n_boundary: self.n_boundary,
            values,
        })
    }

    pub(crate) fn check_same_layout(&self, other: &SpaceTimeField) -> Result<()> {
        if self.time != other.time || self.n_boundary != other.n_boundary {
            return Err(Error::GridMismatch(
                "space-time fields have different layouts".into(),
            ));
        }
        Ok(())
    }
}

/// Discretization parameters of one forward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    h: f64,
    time: TimeGrid,
}

impl SolverSettings {
    pub fn new(h: f64, time: TimeGrid) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::config(format!("spatial step must be positive, got {h}")));
        }
        Ok(SolverSettings { h, time })
    }

    /// Choose the largest even step count whose CFL number stays at or below
    /// `target`, itself capped at the dimension's stability margin: 0.9 on
    /// the interval and 0.68 on the rectangle (below the five-point von
    /// Neumann bound `1/√2`).
    pub fn with_cfl(c: &SpeedField, two_t: f64, target: f64) -> Result<Self> {
        let h = c.grids().h();
        let cap = if c.grids().dim() == 1 { CFL_LIMIT } else { 0.68 };
        let target = target.min(cap);
        if !(target > 0.0) {
            return Err(Error::config(format!("CFL target must be positive, got {target}")));
        }
        let min_steps = (two_t * c.c_max() / (target * h)).ceil() as usize;
        let steps = min_steps + min_steps % 2;
        SolverSettings::new(h, TimeGrid::from_horizon(two_t, steps.max(2))?)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn time(&self) -> TimeGrid {
        self.time
    }

    /// CFL number against a given maximal speed.
    pub fn lambda(&self, c_max: f64) -> f64 {
        c_max * self.time.dt() / self.h
    }

    pub(crate) fn validate_against(&self, c: &SpeedField) -> Result<()> {
        let grid_h = c.grids().h();
        if (self.h - grid_h).abs() > 1e-12 * (1.0 + grid_h) {
            return Err(Error::GridMismatch(format!(
                "solver spatial step {} does not match the grid spacing {grid_h}",
                self.h
            )));
        }
        let lambda = self.lambda(c.c_max());
        if lambda > CFL_LIMIT + 1e-12 {
            return Err(Error::CflViolation {
                lambda,
                limit: CFL_LIMIT,
            });
        }
        Ok(())
    }
}

/// Run the leapfrog scheme; returns the boundary trace over `[0, 2T]` and
/// the interior snapshot at `t = T`.
pub fn simulate(
    c: &SpeedField,
    f: &SpaceTimeField,
    settings: &SolverSettings,
) -> Result<(SpaceTimeField, InteriorField)> {
    let (trace, snapshot, _) = solver::run(c, f, settings, false)?;
    Ok((trace, snapshot))
}

/// As [`simulate`], additionally returning the discrete energy at every half
/// step (conserved exactly once the source switches off).
pub fn simulate_with_energy(
    c: &SpeedField,
    f: &SpaceTimeField,
    settings: &SolverSettings,
) -> Result<(SpaceTimeField, InteriorField, Vec<f64>)> {
    let (trace, snapshot, energy) = solver::run(c, f, settings, true)?;
    Ok((trace, snapshot, energy))
}
