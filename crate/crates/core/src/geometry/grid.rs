//! Interior and boundary grids for the three supported domain shapes.
//!
//! Interior grids are uniform tensor grids; the disk is a Cartesian grid
//! masked to the circle, with cell weights reduced near the rim so that the
//! total weight recovers the disk area to second order. Boundary grids carry
//! Euclidean quadrature weights: exactly 1 per interval endpoint, the segment
//! length `h` per rectangle perimeter node, and the arc length `2πρ/m` per
//! disk node.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Domain shape together with its defining lengths.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Shape {
    Interval { length: f64 },
    Rectangle { width: f64, height: f64 },
    Disk { radius: f64 },
}

impl Shape {
    /// Spatial dimension of the domain.
    pub fn dim(&self) -> usize {
        match self {
            Shape::Interval { .. } => 1,
            _ => 2,
        }
    }

    /// Radius of the largest inscribed ball.
    pub(crate) fn inradius(&self) -> f64 {
        match *self {
            Shape::Interval { length } => 0.5 * length,
            Shape::Rectangle { width, height } => 0.5 * width.min(height),
            Shape::Disk { radius } => radius,
        }
    }
}

/// Shape plus grid resolutions.
///
/// `interior_resolution` counts grid nodes per unit length including both
/// ends of a unit segment, so the grid spacing is `1/(interior_resolution-1)`.
/// `boundary_resolution` is the number of boundary nodes of the disk; the
/// interval always has its two endpoints and the rectangle inherits the
/// perimeter nodes of the interior grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DomainSpec {
    pub shape: Shape,
    pub interior_resolution: usize,
    pub boundary_resolution: usize,
}

impl DomainSpec {
    pub fn new(shape: Shape, interior_resolution: usize, boundary_resolution: usize) -> Self {
        DomainSpec {
            shape,
            interior_resolution,
            boundary_resolution,
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Grid spacing implied by the interior resolution.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.interior_resolution.max(2) - 1) as f64
    }

    fn validate(&self) -> Result<()> {
        if self.interior_resolution < 2 || self.boundary_resolution < 2 {
            return Err(Error::config("resolutions must be at least 2"));
        }
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match self.shape {
            Shape::Interval { length } => positive("interval length", length),
            Shape::Rectangle { width, height } => {
                positive("rectangle width", width)?;
                positive("rectangle height", height)
            }
            Shape::Disk { radius } => positive("disk radius", radius),
        }
    }
}

/// Structured index data behind a 2-D interior grid.
#[derive(Debug, Clone)]
pub(crate) struct Mask2d {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub y0: f64,
    /// Compact node id per full-grid cell, or -1 outside the mask.
    pub ids: Vec<i32>,
    /// Full-grid coordinates per compact node id.
    pub coords: Vec<(u32, u32)>,
}

impl Mask2d {
    pub fn id_at(&self, ix: i64, iy: i64) -> Option<usize> {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return None;
        }
        let id = self.ids[iy as usize * self.nx + ix as usize];
        (id >= 0).then_some(id as usize)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Layout {
    Line { n: usize },
    Grid(Mask2d),
}

/// Interior quadrature grid: node positions with Euclidean cell weights.
#[derive(Debug, Clone)]
pub struct InteriorGrid {
    h: f64,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    pub(crate) layout: Layout,
}

impl InteriorGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn point(&self, id: usize) -> [f64; 2] {
        self.points[id]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Euclidean quadrature weight of one node (length or clipped cell area).
    pub fn weight(&self, id: usize) -> f64 {
        self.weights[id]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn mask(&self) -> Option<&Mask2d> {
        match &self.layout {
            Layout::Grid(m) => Some(m),
            Layout::Line { .. } => None,
        }
    }

    /// Compact id of the node nearest to `p`.
    pub fn nearest_node(&self, p: [f64; 2]) -> usize {
        match &self.layout {
            Layout::Line { n } => {
                let i = (p[0] / self.h).round().clamp(0.0, (*n - 1) as f64) as usize;
                i
            }
            Layout::Grid(m) => {
                let ix = ((p[0] - m.x0) / self.h).round() as i64;
                let iy = ((p[1] - m.y0) / self.h).round() as i64;
                // Scan outward a little in case the rounded cell is masked off.
                for radius in 0..3i64 {
                    let mut best: Option<(f64, usize)> = None;
                    for dy in -radius..=radius {
                        for dx in -radius..=radius {
                            if let Some(id) = m.id_at(ix + dx, iy + dy) {
                                let q = self.points[id];
                                let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                                if best.map_or(true, |(b, _)| d2 < b) {
                                    best = Some((d2, id));
                                }
                            }
                        }
                    }
                    if let Some((_, id)) = best {
                        return id;
                    }
                }
                // Fall back to a full scan for points far outside the mask.
                let mut best = (f64::INFINITY, 0usize);
                for (id, q) in self.points.iter().enumerate() {
                    let d2 = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
                    if d2 < best.0 {
                        best = (d2, id);
                    }
                }
                best.1
            }
        }
    }
}

/// Boundary quadrature grid.
#[derive(Debug, Clone)]
pub struct BoundaryGrid {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    /// Interior-grid node id when the boundary node coincides with one.
    grid_node: Vec<Option<usize>>,
}

impl BoundaryGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, j: usize) -> [f64; 2] {
        self.points[j]
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Euclidean quadrature weight (1 per interval endpoint, segment or arc
    /// length in 2-D).
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn grid_node(&self, j: usize) -> Option<usize> {
        self.grid_node[j]
    }
}

/// Interior and boundary grids of one domain.
#[derive(Debug, Clone)]
pub struct Grids {
    pub spec: DomainSpec,
    pub interior: InteriorGrid,
    pub boundary: BoundaryGrid,
}

impl Grids {
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn h(&self) -> f64 {
        self.interior.h()
    }

    /// True when `other` describes the same discretization.
    pub fn compatible(&self, other: &Grids) -> bool {
        self.spec == other.spec
    }

    /// Does the closed domain contain `p` (up to a spacing-scaled fuzz)?
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let tol = 1e-9 * (1.0 + self.h());
        match self.spec.shape {
            Shape::Interval { length } => {
                p[0] >= -tol && p[0] <= length + tol && p[1].abs() <= tol
            }
            Shape::Rectangle { width, height } => {
                p[0] >= -tol && p[0] <= width + tol && p[1] >= -tol && p[1] <= height + tol
            }
            Shape::Disk { radius } => p[0] * p[0] + p[1] * p[1] <= (radius + tol) * (radius + tol),
        }
    }
}

fn side_cells(name: &str, extent: f64, h: f64) -> Result<usize> {
    let cells = extent / h;
    let rounded = cells.round();
    if (cells - rounded).abs() > 1e-9 * (1.0 + cells.abs()) || rounded < 1.0 {
        return Err(Error::config(format!(
            "{name} {extent} is not a whole number of grid cells at spacing {h}"
        )));
    }
    Ok(rounded as usize)
}

/// Build the interior and boundary grids for a domain specification.
pub fn build_grids(spec: &DomainSpec) -> Result<Arc<Grids>> {
    spec.validate()?;
    let h = spec.spacing();
    let grids = match spec.shape {
        Shape::Interval { length } => {
            let n = side_cells("interval length", length, h)? + 1;
            let points: Vec<[f64; 2]> = (0..n).map(|i| [i as f64 * h, 0.0]).collect();
            let mut weights = vec![h; n];
            weights[0] = 0.5 * h;
            weights[n - 1] = 0.5 * h;
            let interior = InteriorGrid {
                h,
                points,
                weights,
                layout: Layout::Line { n },
            };
            let boundary = BoundaryGrid {
                points: vec![[0.0, 0.0], [length, 0.0]],
                weights: vec![1.0, 1.0],
                grid_node: vec![Some(0), Some(n - 1)],
            };
            Grids {
                spec: *spec,
                interior,
                boundary,
            }
        }
        Shape::Rectangle { width, height } => {
            let nx = side_cells("rectangle width", width, h)? + 1;
            let ny = side_cells("rectangle height", height, h)? + 1;
            let mut points = Vec::with_capacity(nx * ny);
            let mut weights = Vec::with_capacity(nx * ny);
            let mut ids = Vec::with_capacity(nx * ny);
            let mut coords = Vec::with_capacity(nx * ny);
            let side_w = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            for iy in 0..ny {
                for ix in 0..nx {
                    ids.push(points.len() as i32);
                    coords.push((ix as u32, iy as u32));
                    points.push([ix as f64 * h, iy as f64 * h]);
                    weights.push(h * h * side_w(ix, nx) * side_w(iy, ny));
                }
            }
            let interior = InteriorGrid {
                h,
                points,
                weights,
                layout: Layout::Grid(Mask2d {
                    nx,
                    ny,
                    x0: 0.0,
                    y0: 0.0,
                    ids,
                    coords,
                }),
            };
            // Perimeter nodes, counterclockwise from the origin corner, each
            // exactly once; every node owns two half-segments of length h/2.
            let mut bpoints = Vec::new();
            let mut bnodes = Vec::new();
            let node_id = |ix: usize, iy: usize| iy * nx + ix;
            for ix in 0..nx - 1 {
                bpoints.push([ix as f64 * h, 0.0]);
                bnodes.push(Some(node_id(ix, 0)));
            }
            for iy in 0..ny - 1 {
                bpoints.push([(nx - 1) as f64 * h, iy as f64 * h]);
                bnodes.push(Some(node_id(nx - 1, iy)));
            }
            for ix in (1..nx).rev() {
                bpoints.push([ix as f64 * h, (ny - 1) as f64 * h]);
                bnodes.push(Some(node_id(ix, ny - 1)));
            }
            for iy in (1..ny).rev() {
                bpoints.push([0.0, iy as f64 * h]);
                bnodes.push(Some(node_id(0, iy)));
            }
            let m = bpoints.len();
            let boundary = BoundaryGrid {
                points: bpoints,
                weights: vec![h; m],
                grid_node: bnodes,
            };
            Grids {
                spec: *spec,
                interior,
                boundary,
            }
        }
        Shape::Disk { radius } => {
            let n_side = side_cells("disk diameter", 2.0 * radius, h)? + 1;
            let x0 = -radius;
            let y0 = -radius;
            let mut ids = vec![-1i32; n_side * n_side];
            let mut coords = Vec::new();
            let mut points = Vec::new();
            let mut weights = Vec::new();
            let rim = radius + 1e-12 * (1.0 + radius);
            for iy in 0..n_side {
                for ix in 0..n_side {
                    let p = [x0 + ix as f64 * h, y0 + iy as f64 * h];
                    let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    if r <= rim {
                        ids[iy * n_side + ix] = points.len() as i32;
                        coords.push((ix as u32, iy as u32));
                        points.push(p);
                        // Fraction of the h-cell inside the disk, to first
                        // order in  the signed distance to the rim; makes the
                        // total weight the disk area to O(h^2).
                        let frac = (0.5 + (radius - r) / h).clamp(0.0, 1.0);
                        weights.push(h * h * frac);
                    }
                }
            }
            let interior = InteriorGrid {
                h,
                points,
                weights,
                layout: Layout::Grid(Mask2d {
                    nx: n_side,
                    ny: n_side,
                    x0,
                    y0,
                    ids,
                    coords,
                }),
            };
            let m = spec.boundary_resolution;
            let arc = 2.0 * std::f64::consts::PI * radius / m as f64;
            let mut bpoints = Vec::with_capacity(m);
            for k in 0..m {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
                bpoints.push([radius * theta.cos(), radius * theta.sin()]);
            }
            let boundary = BoundaryGrid {
                points: bpoints,
                weights: vec![arc; m],
                grid_node: vec![None; m],
            };
            Grids {
                spec: *spec,
                interior,
                boundary,
            }
        }
    };
    Ok(Arc::new(grids))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_grid_nodes_and_weights() {
        let spec = DomainSpec::new(Shape::Interval { length: 1.0 }, 5, 2);
        let g = build_grids(&spec).unwrap();
        let xs: Vec<f64> = g.interior.points().iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.boundary.len(), 2);
        assert_eq!(g.boundary.weights(), &[1.0, 1.0]);
        let total: f64 = g.interior.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rectangle_boundary_walk_covers_perimeter_once() {
        let spec = DomainSpec::new(
            Shape::Rectangle {
                width: 1.0,
                height: 1.0,
            },
            5,
            2,
        );
        let g = build_grids(&spec).unwrap();
        assert_eq!(g.interior.len(), 25);
        assert_eq!(g.boundary.len(), 16);
        let total: f64 = g.boundary.weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-12, "perimeter weight {total}");
        // Every perimeter node id is distinct.
        let mut seen: Vec<usize> = g
            .boundary
            .points()
            .iter()
            .enumerate()
            .map(|(j, _)| g.boundary.grid_node(j).unwrap())
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 16);
    }

    #[test]
    fn disk_nodes_at_uniform_angles_and_area() {
        let spec = DomainSpec::new(Shape::Disk { radius: 1.0 }, 101, 8);
        let g = build_grids(&spec).unwrap();
        assert_eq!(g.boundary.len(), 8);
        let w = 2.0 * std::f64::consts::PI / 8.0;
        assert!(g.boundary.weights().iter().all(|&x| (x - w).abs() < 1e-12));
        let p = g.boundary.point(2);
        assert!((p[0]).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
        let area: f64 = g.interior.weights().iter().sum();
        let pi = std::f64::consts::PI;
        assert!(
            (area - pi).abs() < 3e-3 * pi,
            "disk area {area} vs {pi}"
        );
        // Cell count matches the area estimate.
        let h = g.h();
        let count = g.interior.len() as f64;
        assert!((count * h * h - pi).abs() < 0.1 * pi);
    }

    #[test]
    fn degenerate_resolution_rejected() {
        let spec = DomainSpec::new(Shape::Interval { length: 1.0 }, 1, 2);
        assert!(build_grids(&spec).is_err());
        let spec = DomainSpec::new(Shape::Interval { length: -1.0 }, 5, 2);
        assert!(build_grids(&spec).is_err());
    }
}
