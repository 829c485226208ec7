//! Travel times in the metric `c^{-2} dx^2`.
//!
//! In one dimension the travel time between two points is the integral of
//! the slowness `1/c`, evaluated by composite Simpson quadrature on a 4x
//! refinement of the grid cells; for analytic speed profiles this is
//! accurate to roughly `(h/4)^4`. In two dimensions distances come from the
//! fast marching solver in [`crate::geometry::fmm`].

use crate::error::{Error, Result};
use crate::geometry::fields::{BoundaryProfile, InteriorField};
use crate::geometry::fmm::{self, FmmOptions};
use crate::geometry::grid::Shape;
use crate::geometry::speed::SpeedField;

/// Simpson rule on `[a, b]` split into four subintervals.
fn simpson4(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = (b - a) / 4.0;
    if h == 0.0 {
        return 0.0;
    }
    let x = |i: usize| a + i as f64 * h;
    (h / 3.0) * (f(x(0)) + 4.0 * f(x(1)) + 2.0 * f(x(2)) + 4.0 * f(x(3)) + f(x(4)))
}

/// Slowness integral over the straight segment from `p` to `q`.
///
/// Exact up to quadrature error for straight rays; used for short hops where
/// geodesic bending is negligible.
pub(crate) fn segment_time(c: &SpeedField, p: [f64; 2], q: [f64; 2]) -> f64 {
    let len = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let point = |t: f64| [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])];
    // Two chained Simpson panels keep short hops cheap and accurate.
    let slow = |t: f64| len / c.eval_at(point(t));
    simpson4(&slow, 0.0, 0.5) + simpson4(&slow, 0.5, 1.0)
}

/// Slowness integral over `[a, b]` on the interval domain, walking the grid
/// cells so that refinement aligns with the mesh.
fn integrate_slowness_1d(c: &SpeedField, a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let h = c.grids().h();
    let slow = |x: f64| 1.0 / c.eval_at([x, 0.0]);
    // Walk cells by index so roundoff at cell boundaries cannot stall the
    // sweep; degenerate slivers contribute nothing and are skipped.
    let first = (a / h).floor().max(0.0) as i64;
    let last = ((b / h).ceil() as i64 - 1).max(first);
    let mut acc = 0.0;
    for k in first..=last {
        let lo = (k as f64 * h).max(a);
        let hi = ((k + 1) as f64 * h).min(b);
        if hi > lo {
            acc += simpson4(&slow, lo, hi);
        }
    }
    acc
}

/// Travel time between two points of the interval domain.
pub fn travel_time_1d(c: &SpeedField, x: f64, y: f64) -> Result<f64> {
    let length = match c.grids().spec.shape {
        Shape::Interval { length } => length,
        _ => {
            return Err(Error::config(
                "travel_time_1d requires an interval domain",
            ))
        }
    };
    for &v in &[x, y] {
        if !(0.0..=length).contains(&v) {
            return Err(Error::OutsideDomain(v, 0.0));
        }
    }
    Ok(integrate_slowness_1d(c, x.min(y), x.max(y)))
}

/// Travel-time field from one boundary node over all interior nodes.
pub fn travel_time_field_2d(c: &SpeedField, source_node: usize) -> Result<InteriorField> {
    let grids = c.grids();
    if grids.dim() != 2 {
        return Err(Error::config(
            "travel_time_field_2d requires a rectangle or disk domain",
        ));
    }
    if source_node >= grids.boundary.len() {
        return Err(Error::config(format!(
            "boundary node {source_node} out of range ({} nodes)",
            grids.boundary.len()
        )));
    }
    fmm::distance_from_point(c, grids.boundary.point(source_node), &FmmOptions::default())
}

/// Travel times from every boundary node, 1-D by cumulative quadrature and
/// 2-D by one fast marching sweep per boundary node.
#[derive(Debug)]
pub struct DistanceAtlas {
    fields: Vec<InteriorField>,
}

impl DistanceAtlas {
    pub(crate) fn build(c: &SpeedField) -> Result<DistanceAtlas> {
        let grids = c.grids();
        match grids.spec.shape {
            Shape::Interval { .. } => {
                let n = grids.interior.len();
                let h = grids.h();
                let slow = |x: f64| 1.0 / c.eval_at([x, 0.0]);
                let mut from_left = vec![0.0; n];
                for i in 1..n {
                    from_left[i] =
                        from_left[i - 1] + simpson4(&slow, (i - 1) as f64 * h, i as f64 * h);
                }
                let total = from_left[n - 1];
                let from_right: Vec<f64> = from_left.iter().map(|&t| total - t).collect();
                Ok(DistanceAtlas {
                    fields: vec![
                        InteriorField::from_values(grids.clone(), from_left)?,
                        InteriorField::from_values(grids.clone(), from_right)?,
                    ],
                })
            }
            _ => {
                let fields = (0..grids.boundary.len())
                    .map(|j| travel_time_field_2d(c, j))
                    .collect::<Result<Vec<_>>>()?;
                Ok(DistanceAtlas { fields })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Travel-time field of boundary node `j`.
    pub fn field(&self, j: usize) -> &InteriorField {
        &self.fields[j]
    }

    /// Distances seen from interior node `id`: the boundary profile
    /// `r_x(y) = d(x, y)` for `x` the given grid node.
    pub fn boundary_profile_at(&self, id: usize) -> BoundaryProfile {
        BoundaryProfile::from_values(self.fields.iter().map(|f| f.value(id)).collect())
            .expect("atlas is nonempty")
    }
}

/// Distances from an interior point to every boundary node.
///
/// On the interval this is quadrature from both endpoints; in two dimensions
/// one fast marching sweep runs from `x` and is read back at the boundary
/// nodes (reciprocity), extended off-grid near the disk rim.
pub fn boundary_distance_function(c: &SpeedField, x: [f64; 2]) -> Result<BoundaryProfile> {
    let grids = c.grids();
    if !grids.contains(x) {
        return Err(Error::OutsideDomain(x[0], x[1]));
    }
    match grids.spec.shape {
        Shape::Interval { length } => {
            let left = integrate_slowness_1d(c, 0.0, x[0].clamp(0.0, length));
            let right = integrate_slowness_1d(c, x[0].clamp(0.0, length), length);
            BoundaryProfile::from_values(vec![left, right])
        }
        _ => {
            let field = fmm::distance_from_point(c, x, &FmmOptions::default())?;
            let values = (0..grids.boundary.len())
                .map(|j| match grids.boundary.grid_node(j) {
                    Some(id) => field.value(id),
                    None => fmm::extend_to_point(c, &field, grids.boundary.point(j)),
                })
                .collect();
            BoundaryProfile::from_values(values)
        }
    }
}

/// Volume of a region in the natural measure `c^{-2} dx`.
///
/// `indicator` holds values in `[0, 1]` per interior node; the result is the
/// weighted sum over the interior quadrature.
pub fn natural_volume(c: &SpeedField, indicator: &InteriorField) -> Result<f64> {
    let grids = c.grids();
    if !grids.compatible(indicator.grids()) {
        return Err(Error::GridMismatch(
            "indicator lives on a different grid than the speed field".into(),
        ));
    }
    let mut acc = 0.0;
    for (id, &v) in indicator.values().iter().enumerate() {
        acc += v * grids.interior.weight(id) * c.interior_density(id);
    }
    Ok(acc)
}

/// Weighted inner product `(a, b)` in `L^2` of the natural measure.
pub fn mu_inner(c: &SpeedField, a: &InteriorField, b: &InteriorField) -> Result<f64> {
    a.check_same_grid(b)?;
    let grids = c.grids();
    if !grids.compatible(a.grids()) {
        return Err(Error::GridMismatch(
            "fields live on a different grid than the speed field".into(),
        ));
    }
    let mut acc = 0.0;
    for id in 0..a.len() {
        acc += a.value(id) * b.value(id) * grids.interior.weight(id) * c.interior_density(id);
    }
    Ok(acc)
}

/// Norm in `L^2` of the natural measure.
pub fn mu_norm(c: &SpeedField, a: &InteriorField) -> Result<f64> {
    Ok(mu_inner(c, a, a)?.max(0.0).sqrt())
}
