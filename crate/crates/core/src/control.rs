//! Time-axis operators on boundary sources and the weighted space-time
//! inner product.
//!
//! The operators act per boundary node along the time axis of a
//! [`SpaceTimeField`] over `[0, 2T]`:
//!
//! * `R f(t) = f(2T − t)` — time reversal, an isometric involution;
//! * `J f(t) = ½ ∫_t^{2T−t} f(s) ds` for `t < T`, zero afterwards;
//! * `I f(t) = 1_{(0,T)}(t) ∫_0^t f(s) ds` — the running integral;
//! * `I⁺` — the exact transpose of the discrete `I` in the weighted inner
//!   product, approximating `∫_s^T f(t) dt` for `s < T`.
//!
//! `I⁺` is deliberately the literal matrix transpose rather than a separate
//! quadrature: adjoint pairs that hold to machine precision keep the normal
//! equations of the control problem exactly symmetric, leaving the measured
//! operator as the only source of asymmetry.
//!
//! [`apply_K`] composes boundary measurements into the connecting operator
//! `K = J Λ − R Λ R J` using exactly two measurements per application.

use crate::error::{Error, Result};
use crate::forward::{MeasurementDevice, SpaceTimeField, TimeGrid};
use crate::geometry::SpeedField;

/// Quadrature weights of the inner product on `(0, 2T) × ∂M`: trapezoidal
/// in time, boundary quadrature times the measure density `c^{1−n}` in
/// space. On the interval the boundary weights are exactly 1 per endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerProductWeights {
    time: Vec<f64>,
    boundary: Vec<f64>,
    grid: TimeGrid,
}

impl InnerProductWeights {
    pub fn new(c: &SpeedField, grid: TimeGrid) -> Self {
        let dt = grid.dt();
        let n = grid.n_nodes();
        let time = (0..n)
            .map(|k| if k == 0 || k == n - 1 { 0.5 * dt } else { dt })
            .collect();
        let boundary = (0..c.grids().boundary.len())
            .map(|j| c.grids().boundary.weight(j) * c.boundary_density(j))
            .collect();
        InnerProductWeights {
            time,
            boundary,
            grid,
        }
    }

    pub fn time_grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn time_weights(&self) -> &[f64] {
        &self.time
    }

    pub fn boundary_weights(&self) -> &[f64] {
        &self.boundary
    }

    fn check(&self, f: &SpaceTimeField) -> Result<()> {
        if f.time() != self.grid || f.n_boundary() != self.boundary.len() {
            return Err(Error::GridMismatch(
                "field does not match the inner-product weights".into(),
            ));
        }
        Ok(())
    }

    /// Weighted inner product, accumulated with compensated summation.
    pub fn inner(&self, f: &SpaceTimeField, h: &SpaceTimeField) -> Result<f64> {
        self.check(f)?;
        self.check(h)?;
        f.check_same_layout(h)?;
        let nb = self.boundary.len();
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for (k, &wt) in self.time.iter().enumerate() {
            let row_f = f.row(k);
            let row_h = h.row(k);
            for j in 0..nb {
                let term = wt * self.boundary[j] * row_f[j] * row_h[j];
                let t = sum + term;
                comp += if sum.abs() >= term.abs() {
                    (sum - t) + term
                } else {
                    (term - t) + sum
                };
                sum = t;
            }
        }
        Ok(sum + comp)
    }

    pub fn norm(&self, f: &SpaceTimeField) -> Result<f64> {
        Ok(self.inner(f, f)?.max(0.0).sqrt())
    }
}

/// The integration triangle `{(t, s) : t + s ≤ 2T, s > t > 0}` realized as
/// closed per-time-node bounds `[t_k, 2T − t_k]`; empty for `t ≥ T`.
#[derive(Debug, Clone, Copy)]
pub struct TriangleL {
    time: TimeGrid,
}

impl TriangleL {
    pub fn new(time: TimeGrid) -> Self {
        TriangleL { time }
    }

    pub fn contains(&self, t: f64, s: f64) -> bool {
        t + s <= self.time.two_t() && s > t && t > 0.0
    }

    /// Inclusive node range `[k, N − k]` integrated over at time node `k`,
    /// or `None` when the slice is empty (`t_k ≥ T`).
    pub fn node_range(&self, k: usize) -> Option<(usize, usize)> {
        (k < self.time.half_index()).then(|| (k, self.time.steps() - k))
    }
}

/// Time reversal `f(t) ↦ f(2T − t)`.
pub fn op_r(f: &SpaceTimeField) -> SpaceTimeField {
    let time = f.time();
    let nb = f.n_boundary();
    let mut out = SpaceTimeField::zeros(time, nb);
    for k in 0..time.n_nodes() {
        let src = f.row(time.steps() - k);
        for j in 0..nb {
            out.set(k, j, src[j]);
        }
    }
    out
}

/// `J f(t_k) = ½ ∫_{t_k}^{2T − t_k} f ds` by trapezoidal quadrature, zero
/// for `t_k ≥ T`.
pub fn op_j(f: &SpaceTimeField) -> SpaceTimeField {
    let time = f.time();
    let nb = f.n_boundary();
    let dt = time.dt();
    let triangle = TriangleL::new(time);
    let mut out = SpaceTimeField::zeros(time, nb);
    for j in 0..nb {
        // Prefix sums turn every trapezoidal slice into two lookups.
        let mut prefix = Vec::with_capacity(time.n_nodes() + 1);
        prefix.push(0.0f64);
        let mut acc = 0.0f64;
        for k in 0..time.n_nodes() {
            acc += f.at(k, j);
            prefix.push(acc);
        }
        for k in 0..time.n_nodes() {
            if let Some((lo, hi)) = triangle.node_range(k) {
                let interior = prefix[hi] - prefix[lo + 1];
                let value = 0.5 * dt * (0.5 * f.at(lo, j) + interior + 0.5 * f.at(hi, j));
                out.set(k, j, value);
            }
        }
    }
    out
}

/// `I f(t_k) = ∫_0^{t_k} f ds` by trapezoidal quadrature for `t_k < T`,
/// zero for `t_k ≥ T`.
pub fn op_i(f: &SpaceTimeField) -> SpaceTimeField {
    let time = f.time();
    let nb = f.n_boundary();
    let dt = time.dt();
    let half = time.half_index();
    let mut out = SpaceTimeField::zeros(time, nb);
    for j in 0..nb {
        // Running trapezoid: add half the new sample, half the previous.
        let mut acc = 0.0f64;
        for k in 1..half {
            acc += 0.5 * dt * (f.at(k - 1, j) + f.at(k, j));
            out.set(k, j, acc);
        }
    }
    out
}

/// Exact transpose of [`op_i`] with respect to `weights`; approximates
/// `∫_s^T h dt` for `s < T` and vanishes for `s ≥ T`.
pub fn op_i_adjoint(weights: &InnerProductWeights, h: &SpaceTimeField) -> Result<SpaceTimeField> {
    weights.check(h)?;
    let time = h.time();
    let nb = h.n_boundary();
    let dt = time.dt();
    let half = time.half_index();
    let wt = weights.time_weights();
    let mut out = SpaceTimeField::zeros(time, nb);
    for j in 0..nb {
        // suffix[k] = Σ_{m ≥ k, 1 ≤ m < half} wt_m h_m.
        let mut suffix = vec![0.0f64; half + 1];
        for k in (1..half).rev() {
            suffix[k] = suffix[k + 1] + wt[k] * h.at(k, j);
        }
        for k in 0..half {
            let weighted = if k == 0 {
                0.5 * dt * suffix[1]
            } else {
                dt * (suffix[k] - 0.5 * wt[k] * h.at(k, j))
            };
            out.set(k, j, weighted / wt[k]);
        }
    }
    Ok(out)
}

/// Apply the connecting operator `K = J Λ − R Λ R J` through exactly two
/// boundary measurements.
pub fn apply_k(device: &MeasurementDevice, f: &SpaceTimeField) -> Result<SpaceTimeField> {
    let trace_f = device.measure(f)?;
    let reversed_source = op_r(&op_j(f));
    let trace_rjf = device.measure(&reversed_source)?;
    let mut out = op_j(&trace_f);
    out.axpy(-1.0, &op_r(&trace_rjf))?;
    Ok(out)
}
