//! The regularized control problem on a support-constrained source space.
//!
//! For a boundary subset `Γ`, a time budget `τ`, and control time `T`, the
//! admissible sources live in the subspace `S` of fields supported in
//! `{(t, y) : y ∈ Γ, T − min(τ(y), T) ≤ t ≤ T}`. Minimizing the Tikhonov
//! energy `E(f) = (f, Kf) − 2(If, 1) + α‖f‖²` over `S` is equivalent to the
//! normal equation `(P K P + α) f = P I⁺ 1`, which is solved matrix-free by
//! conjugate gradients: each operator application costs exactly two boundary
//! measurements and nothing else touches the device.
//!
//! As `α` decreases, the wave field `u^{f_α}(T)` focuses onto the indicator
//! of the domain of influence `M(Γ, τ ∧ T)`, and the quadratic form
//! `(f_α, K f_α)` approaches its natural volume. [`alpha_continuation`]
//! realizes the limit along a decreasing schedule with warm starts, and
//! [`verify_theorem2`] checks the focusing claim against an interior
//! snapshot when the verification channel is open.

use serde_json::json;

use crate::control::{apply_k, op_i_adjoint, InnerProductWeights};
use crate::error::{Error, Result};
use crate::forward::{MeasurementDevice, SpaceTimeField, TimeGrid};
use crate::geometry::{mu_norm, BoundaryProfile, InteriorField};
use crate::influence::{domain_of_influence, BoundarySubset};

/// Default geometric regularization schedule for [`alpha_continuation`].
pub const DEFAULT_ALPHA_SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Indicator of the admissible space-time support
/// `{(t_k, y_j) : y_j ∈ Γ, T − min(τ(y_j), T) ≤ t_k ≤ T}`, acting as the
/// orthogonal projector `P` by zeroing everything outside.
///
/// Nodes where `τ` is negative get an empty time window.
#[derive(Debug, Clone)]
pub struct SupportMask {
    time: TimeGrid,
    gamma: BoundarySubset,
    tau: BoundaryProfile,
    included: Vec<bool>,
    count: usize,
}

impl SupportMask {
    pub fn time(&self) -> TimeGrid {
        self.time
    }

    pub fn n_boundary(&self) -> usize {
        self.gamma.total()
    }

    pub fn gamma(&self) -> &BoundarySubset {
        &self.gamma
    }

    pub fn tau(&self) -> &BoundaryProfile {
        &self.tau
    }

    /// Number of included space-time nodes.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn contains(&self, k: usize, j: usize) -> bool {
        self.included[k * self.gamma.total() + j]
    }

    /// Orthogonal projection: zero outside the mask.
    pub fn apply(&self, f: &SpaceTimeField) -> SpaceTimeField {
        let mut out = f.clone();
        self.project(&mut out);
        out
    }

    pub fn project(&self, f: &mut SpaceTimeField) {
        for (v, &keep) in f.values_mut().iter_mut().zip(&self.included) {
            if !keep {
                *v = 0.0;
            }
        }
    }
}

/// Build the support projector for `(Γ, τ)` on the given time grid.
///
/// The budget is clamped to `[0, T]` before the window `[T − τ(y), T]` is
/// formed; the node at `t = T − τ(y)` is included (closed staircase window,
/// no subcell weighting).
pub fn projector_p(
    gamma: &BoundarySubset,
    tau: &BoundaryProfile,
    time: TimeGrid,
) -> Result<SupportMask> {
    if gamma.is_empty() {
        return Err(Error::Empty("boundary subset"));
    }
    let nb = gamma.total();
    if tau.len() != nb {
        return Err(Error::GridMismatch(format!(
            "time budget has {} values for {nb} boundary nodes",
            tau.len()
        )));
    }
    if let Some(bad) = tau.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::config(format!("time budget must be finite, got {bad}")));
    }
    let t_control = time.horizon();
    let half = time.half_index();
    let dt = time.dt();
    let mut included = vec![false; time.n_nodes() * nb];
    let mut count = 0;
    for j in gamma.iter() {
        let budget = tau.value(j);
        if budget < 0.0 {
            continue;
        }
        let start_time = t_control - budget.min(t_control);
        // Index tolerance keeps an on-grid window edge inside the window.
        let start = (start_time / dt - 1e-9).ceil().max(0.0) as usize;
        for k in start..=half {
            included[k * nb + j] = true;
            count += 1;
        }
    }
    Ok(SupportMask {
        time,
        gamma: gamma.clone(),
        tau: tau.clone(),
        included,
        count,
    })
}

/// Right-hand side `P I⁺ 1` of the normal equation.
pub fn rhs(weights: &InnerProductWeights, mask: &SupportMask) -> Result<SpaceTimeField> {
    if weights.time_grid() != mask.time() || weights.boundary_weights().len() != mask.n_boundary()
    {
        return Err(Error::GridMismatch(
            "support mask does not match the inner-product weights".into(),
        ));
    }
    let ones = SpaceTimeField::from_fn(mask.time(), mask.n_boundary(), |_, _| 1.0);
    let tail = op_i_adjoint(weights, &ones)?;
    Ok(mask.apply(&tail))
}

/// One regularized solve: the minimizer together with its convergence and
/// energy bookkeeping.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    pub alpha: f64,
    pub minimizer: SpaceTimeField,
    pub cg_iters: usize,
    /// Final residual norm relative to the right-hand side norm.
    pub residual: f64,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    /// Tikhonov energy `E(f_α) = (f, Kf) − 2(If, 1) + α‖f‖²`.
    pub energy: f64,
    /// Volume estimate `(f_α, K f_α)`.
    pub volume: f64,
}

struct CgState {
    x: SpaceTimeField,
    r: SpaceTimeField,
    b: SpaceTimeField,
    b_norm: f64,
}

fn apply_normal_operator(
    device: &MeasurementDevice,
    mask: &SupportMask,
    alpha: f64,
    p: &SpaceTimeField,
) -> Result<SpaceTimeField> {
    let mut out = mask.apply(&apply_k(device, p)?);
    out.axpy(alpha, p)?;
    Ok(out)
}

/// Conjugate gradients on `(P K P + α) x = b` starting from the state's
/// current iterate; measurements: exactly two per iteration.
fn cg_loop(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    mask: &SupportMask,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    state: &mut CgState,
) -> Result<(usize, f64, bool)> {
    let mut rs = weights.inner(&state.r, &state.r)?;
    let mut rel = rs.max(0.0).sqrt() / state.b_norm;
    if rel <= tol {
        return Ok((0, rel, true));
    }
    let mut p = state.r.clone();
    let mut iters = 0;
    while iters < max_iters {
        let ap = apply_normal_operator(device, mask, alpha, &p)?;
        let pap = weights.inner(&p, &ap)?;
        if pap <= 0.0 {
            let pp = weights.inner(&p, &p)?;
            return Err(Error::IndefiniteOperator {
                rayleigh: pap / pp,
            });
        }
        let step = rs / pap;
        state.x.axpy(step, &p)?;
        state.r.axpy(-step, &ap)?;
        iters += 1;
        let rs_next = weights.inner(&state.r, &state.r)?;
        rel = rs_next.max(0.0).sqrt() / state.b_norm;
        if rel <= tol {
            return Ok((iters, rel, true));
        }
        p.scale(rs_next / rs);
        p.axpy(1.0, &state.r)?;
        rs = rs_next;
    }
    Ok((iters, rel, false))
}

fn record_from_state(
    weights: &InnerProductWeights,
    alpha: f64,
    state: &CgState,
    cg_iters: usize,
    residual: f64,
    converged: bool,
) -> Result<SolveRecord> {
    // With f in the mask, (f, P K P f) = (f, Kf) = (f, b) − (f, r) − α‖f‖²
    // and (If, 1) = (f, I⁺1) = (f, b): both come from the solve's own K
    // applications, costing no further measurements.
    let fb = weights.inner(&state.x, &state.b)?;
    let fr = weights.inner(&state.x, &state.r)?;
    let ff = weights.inner(&state.x, &state.x)?;
    let volume = fb - fr - alpha * ff;
    let energy = volume - 2.0 * fb + alpha * ff;
    Ok(SolveRecord {
        alpha,
        minimizer: state.x.clone(),
        cg_iters,
        residual,
        converged,
        energy,
        volume,
    })
}

fn check_solve_inputs(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    mask: &SupportMask,
    alpha: f64,
    tol: f64,
) -> Result<()> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::config(format!(
            "regularization strength must be positive, got {alpha}"
        )));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::config(format!("CG tolerance must be positive, got {tol}")));
    }
    if device.time() != mask.time() || device.n_boundary() != mask.n_boundary() {
        return Err(Error::GridMismatch(
            "measurement device does not match the support mask".into(),
        ));
    }
    if weights.time_grid() != mask.time() {
        return Err(Error::GridMismatch(
            "inner-product weights do not match the support mask".into(),
        ));
    }
    Ok(())
}

/// Solve the normal equation `(P K P + α) f = P I⁺ 1` by matrix-free
/// conjugate gradients.
///
/// Stops when the residual drops below `tol` relative to the right-hand
/// side, or after `max_iters` iterations (flagged via
/// [`SolveRecord::converged`], not an error). A warm start is projected
/// onto the mask and costs one extra operator application to form its
/// residual.
pub fn solve_normal_equation(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    mask: &SupportMask,
    alpha: f64,
    tol: f64,
    max_iters: usize,
    warm_start: Option<&SpaceTimeField>,
) -> Result<SolveRecord> {
    check_solve_inputs(device, weights, mask, alpha, tol)?;
    let b = rhs(weights, mask)?;
    let b_norm = weights.norm(&b)?;
    if b_norm == 0.0 {
        let zero = SpaceTimeField::zeros(mask.time(), mask.n_boundary());
        return Ok(SolveRecord {
            alpha,
            minimizer: zero,
            cg_iters: 0,
            residual: 0.0,
            converged: true,
            energy: 0.0,
            volume: 0.0,
        });
    }
    let mut state = match warm_start {
        Some(start) => {
            let x = mask.apply(start);
            let ax = apply_normal_operator(device, mask, alpha, &x)?;
            let r = b.sub(&ax)?;
            CgState { x, r, b: b.clone(), b_norm }
        }
        None => CgState {
            x: SpaceTimeField::zeros(mask.time(), mask.n_boundary()),
            r: b.clone(),
            b: b.clone(),
            b_norm,
        },
    };
    let (iters, residual, converged) =
        cg_loop(device, weights, mask, alpha, tol, max_iters, &mut state)?;
    record_from_state(weights, alpha, &state, iters, residual, converged)
}

/// Volume estimate `(f, Kf)` of a minimizer, from two fresh measurements.
pub fn volume_estimate(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    f: &SpaceTimeField,
) -> Result<f64> {
    weights.inner(f, &apply_k(device, f)?)
}

/// Tikhonov energy `E(f) = (f, Kf) − 2(If, 1) + α‖f‖²`, from two fresh
/// measurements.
pub fn energy(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    f: &SpaceTimeField,
    alpha: f64,
) -> Result<f64> {
    let ones = SpaceTimeField::from_fn(f.time(), f.n_boundary(), |_, _| 1.0);
    let tail = op_i_adjoint(weights, &ones)?;
    let kf = apply_k(device, f)?;
    Ok(weights.inner(f, &kf)? - 2.0 * weights.inner(f, &tail)? + alpha * weights.inner(f, f)?)
}

/// Normalized symmetry defect `|(f, Kh) − (Kf, h)| / (‖f‖ ‖h‖ ‖K‖)` of the
/// measured operator, with `‖K‖` estimated from the same four measurements.
///
/// The smallest trustworthy regularization strength is bounded below by
/// this defect: beneath it the positive-definiteness premise of the normal
/// equation is no longer supported by the data.
pub fn k_symmetry_defect(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    f: &SpaceTimeField,
    h: &SpaceTimeField,
) -> Result<f64> {
    let kf = apply_k(device, f)?;
    let kh = apply_k(device, h)?;
    let nf = weights.norm(f)?;
    let nh = weights.norm(h)?;
    let k_norm = (weights.norm(&kf)? / nf).max(weights.norm(&kh)? / nh);
    Ok((weights.inner(f, &kh)? - weights.inner(&kf, h)?).abs() / (nf * nh * k_norm))
}

/// Continuation history over a decreasing regularization schedule.
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub records: Vec<SolveRecord>,
    /// Boundary measurements consumed by the whole continuation.
    pub measurements: u64,
    /// Influence-oracle volume, available when the device is simulated.
    pub oracle_volume: Option<f64>,
    /// `‖u^{f_α}(T) − 1_{M(Γ, τ∧T)}‖` at the final α, when verification ran.
    pub interior_l2_error: Option<f64>,
}

impl MinimizeReport {
    pub fn final_record(&self) -> &SolveRecord {
        self.records.last().expect("continuation records are never empty")
    }

    /// Volume estimate at the smallest regularization strength.
    pub fn volume(&self) -> f64 {
        self.final_record().volume
    }

    pub fn total_cg_iters(&self) -> usize {
        self.records.iter().map(|r| r.cg_iters).sum()
    }

    /// Whether the volume estimates are non-decreasing along the schedule,
    /// up to `slack`. An observed trend, not a theorem: callers flag a
    /// violation, they do not fail on it.
    pub fn volume_monotone(&self, slack: f64) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].volume >= w[0].volume - slack)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut report = json!({
            "alpha": self.records.iter().map(|r| r.alpha).collect::<Vec<_>>(),
            "volume": self.records.iter().map(|r| r.volume).collect::<Vec<_>>(),
            "cg_iters": self.records.iter().map(|r| r.cg_iters).collect::<Vec<_>>(),
            "residual": self.records.iter().map(|r| r.residual).collect::<Vec<_>>(),
            "measurements": self.measurements,
        });
        let map = report.as_object_mut().expect("report is an object");
        if let Some(v) = self.oracle_volume {
            map.insert("oracle_volume".into(), json!(v));
        }
        if let Some(e) = self.interior_l2_error {
            map.insert("interior_l2_error".into(), json!(e));
        }
        report
    }
}

/// Solve along a strictly decreasing schedule of regularization strengths
/// with warm starts.
///
/// Between stages the residual is updated algebraically for the new `α`
/// (the operator changes only by a multiple of the identity), so a cold
/// continuation costs exactly two measurements per CG iteration. A warm
/// start seeds the first stage from a projected earlier minimizer at the
/// price of one extra operator application. With `verify` the final
/// minimizer is checked against the influence indicator through the
/// device's verification channel.
pub fn alpha_continuation(
    device: &MeasurementDevice,
    weights: &InnerProductWeights,
    mask: &SupportMask,
    schedule: &[f64],
    tol: f64,
    max_iters: usize,
    warm_start: Option<&SpaceTimeField>,
    verify: bool,
) -> Result<MinimizeReport> {
    if schedule.is_empty() {
        return Err(Error::Empty("regularization schedule"));
    }
    if let Some(bad) = schedule.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::config(format!(
            "regularization schedule must be positive, got {bad}"
        )));
    }
    if let Some(w) = schedule.windows(2).find(|w| w[1] >= w[0]) {
        return Err(Error::config(format!(
            "regularization schedule must be strictly decreasing, got {} before {}",
            w[0], w[1]
        )));
    }
    check_solve_inputs(device, weights, mask, schedule[0], tol)?;
    let before = device.measurement_count();

    let b = rhs(weights, mask)?;
    let b_norm = weights.norm(&b)?;
    let mut records = Vec::with_capacity(schedule.len());
    if b_norm == 0.0 {
        for &alpha in schedule {
            let zero = SpaceTimeField::zeros(mask.time(), mask.n_boundary());
            records.push(SolveRecord {
                alpha,
                minimizer: zero,
                cg_iters: 0,
                residual: 0.0,
                converged: true,
                energy: 0.0,
                volume: 0.0,
            });
        }
    } else {
        let mut state = match warm_start {
            Some(start) => {
                let x = mask.apply(start);
                let ax = apply_normal_operator(device, mask, schedule[0], &x)?;
                let r = b.sub(&ax)?;
                CgState { x, r, b: b.clone(), b_norm }
            }
            None => CgState {
                x: SpaceTimeField::zeros(mask.time(), mask.n_boundary()),
                r: b.clone(),
                b: b.clone(),
                b_norm,
            },
        };
        let mut previous_alpha = None;
        for &alpha in schedule {
            if let Some(prev) = previous_alpha {
                // r_new = b − (P K P + α_new) x = r_old − (α_new − α_old) x.
                state.r.axpy(prev - alpha, &state.x.clone())?;
            }
            let (iters, residual, converged) =
                cg_loop(device, weights, mask, alpha, tol, max_iters, &mut state)?;
            records.push(record_from_state(
                weights, alpha, &state, iters, residual, converged,
            )?);
            previous_alpha = Some(alpha);
        }
    }
    let measurements = device.measurement_count() - before;

    let t_control = mask.time().horizon();
    let capped = mask.tau().clamp(f64::NEG_INFINITY, t_control);
    let oracle_volume = match device.speed() {
        Some(c) => Some(domain_of_influence(c, mask.gamma(), &capped)?.volume_closed),
        None => None,
    };
    let interior_l2_error = if verify {
        let last = records.last().expect("schedule is nonempty");
        Some(verify_theorem2(
            device,
            mask.gamma(),
            mask.tau(),
            &last.minimizer,
        )?)
    } else {
        None
    };
    Ok(MinimizeReport {
        records,
        measurements,
        oracle_volume,
        interior_l2_error,
    })
}

/// Interior focusing error `‖u^f(T) − 1_{M(Γ, τ∧T)}‖` in the natural
/// measure, via the device's verification snapshot and the geometric
/// influence indicator.
pub fn verify_theorem2(
    device: &MeasurementDevice,
    gamma: &BoundarySubset,
    tau: &BoundaryProfile,
    f: &SpaceTimeField,
) -> Result<f64> {
    let c = device
        .speed()
        .ok_or_else(|| Error::config("verification requires a simulated device"))?
        .clone();
    let snapshot = device.snapshot(f)?;
    let capped = tau.clamp(f64::NEG_INFINITY, device.time().horizon());
    let influence = domain_of_influence(&c, gamma, &capped)?;
    let diff: Vec<f64> = snapshot
        .values()
        .iter()
        .zip(influence.closed.values())
        .map(|(&u, &ind)| u - ind)
        .collect();
    mu_norm(&c, &InteriorField::from_values(c.grids().clone(), diff)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SolverSettings;
    use crate::geometry::{build_grids, natural_volume, DomainSpec, Shape, SpeedField};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn interval_speed(res: usize, profile: impl Fn(f64) -> f64) -> Arc<SpeedField> {
        let grids = build_grids(&DomainSpec::new(Shape::Interval { length: 1.0 }, res, 2)).unwrap();
        Arc::new(SpeedField::from_fn(grids, move |p| profile(p[0])).unwrap())
    }

    struct Setup {
        speed: Arc<SpeedField>,
        device: MeasurementDevice,
        weights: InnerProductWeights,
        mask: SupportMask,
    }

    fn setup(res: usize, c: impl Fn(f64) -> f64, tau_values: [f64; 2]) -> Setup {
        let speed = interval_speed(res, c);
        let settings = SolverSettings::with_cfl(&speed, 2.0, 0.8).unwrap();
        let device = MeasurementDevice::simulated(Arc::clone(&speed), settings)
            .unwrap()
            .with_verification(true);
        let weights = InnerProductWeights::new(&speed, settings.time());
        let gamma = BoundarySubset::whole(2).unwrap();
        let tau = BoundaryProfile::from_values(tau_values.to_vec()).unwrap();
        let mask = projector_p(&gamma, &tau, settings.time()).unwrap();
        Setup {
            speed,
            device,
            weights,
            mask,
        }
    }

    fn random_masked(mask: &SupportMask, seed: u64) -> SpaceTimeField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = SpaceTimeField::zeros(mask.time(), mask.n_boundary());
        for k in 0..mask.time().n_nodes() {
            for j in 0..mask.n_boundary() {
                if mask.contains(k, j) {
                    f.set(k, j, rng.gen_range(-1.0..1.0));
                }
            }
        }
        f
    }

    fn grid(steps: usize) -> TimeGrid {
        TimeGrid::from_horizon(2.0, steps).unwrap()
    }

    #[test]
    fn projector_windows_follow_the_budget() {
        let time = grid(20);
        let gamma = BoundarySubset::whole(2).unwrap();
        let tau = BoundaryProfile::from_values(vec![0.3, 0.4]).unwrap();
        let mask = projector_p(&gamma, &tau, time).unwrap();
        // [0.7, 1] holds nodes 7..=10; [0.6, 1] holds 6..=10.
        assert_eq!(mask.count(), 9);
        for k in 0..time.n_nodes() {
            assert_eq!(mask.contains(k, 0), (7..=10).contains(&k));
            assert_eq!(mask.contains(k, 1), (6..=10).contains(&k));
        }
    }

    #[test]
    fn projector_degenerate_full_and_clamped_budgets() {
        let time = grid(20);
        let gamma = BoundarySubset::whole(2).unwrap();
        let zero = projector_p(&gamma, &BoundaryProfile::constant(2, 0.0), time).unwrap();
        assert_eq!(zero.count(), 2);
        assert!(zero.contains(10, 0) && zero.contains(10, 1));

        let full = projector_p(&gamma, &BoundaryProfile::constant(2, 1.0), time).unwrap();
        assert_eq!(full.count(), 22);
        let clamped = projector_p(&gamma, &BoundaryProfile::constant(2, 2.0), time).unwrap();
        assert_eq!(clamped.included, full.included);

        let negative =
            projector_p(&gamma, &BoundaryProfile::from_values(vec![-0.1, 0.5], ).unwrap(), time)
                .unwrap();
        assert!((0..time.n_nodes()).all(|k| !negative.contains(k, 0)));
        assert!(negative.count() > 0);
    }

    #[test]
    fn projector_is_idempotent_and_rejects_bad_budgets() {
        let time = grid(16);
        let gamma = BoundarySubset::from_indices(2, vec![1]).unwrap();
        let tau = BoundaryProfile::from_values(vec![0.0, 0.55]).unwrap();
        let mask = projector_p(&gamma, &tau, time).unwrap();
        assert!((0..time.n_nodes()).all(|k| !mask.contains(k, 0)));
        let f = SpaceTimeField::from_fn(time, 2, |t, j| t + j as f64);
        let once = mask.apply(&f);
        assert_eq!(mask.apply(&once), once);

        let short = BoundaryProfile::constant(1, 0.5);
        assert!(projector_p(&gamma, &short, time).is_err());
        let mut inf = BoundaryProfile::from_values(vec![0.1, 0.2]).unwrap();
        inf.set(1, f64::INFINITY);
        assert!(projector_p(&gamma, &inf, time).is_err());
    }

    #[test]
    fn rhs_is_masked_tail_integral() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let b = rhs(&s.weights, &s.mask).unwrap();
        let ones = SpaceTimeField::from_fn(s.mask.time(), 2, |_, _| 1.0);
        let tail = op_i_adjoint(&s.weights, &ones).unwrap();
        for k in 0..s.mask.time().n_nodes() {
            for j in 0..2 {
                let expected = if s.mask.contains(k, j) { tail.at(k, j) } else { 0.0 };
                assert_eq!(b.at(k, j), expected);
            }
        }
        assert!(s.weights.norm(&b).unwrap() > 0.0);

        let gamma = BoundarySubset::whole(2).unwrap();
        let degenerate = projector_p(&gamma, &BoundaryProfile::constant(2, 0.0), s.mask.time()).unwrap();
        let zero_rhs = rhs(&s.weights, &degenerate).unwrap();
        assert!(zero_rhs.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_budget_solves_to_zero_in_zero_iterations() {
        let s = setup(101, |_| 1.0, [0.0, 0.0]);
        let rec =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, 1e-8, 200, None).unwrap();
        assert_eq!(rec.cg_iters, 0);
        assert!(rec.converged);
        assert!(rec.minimizer.values().iter().all(|&v| v == 0.0));
        assert_eq!(rec.volume, 0.0);
        assert_eq!(s.device.measurement_count(), 0);
    }

    #[test]
    fn strong_regularization_returns_scaled_rhs() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let alpha = 1e3;
        let rec =
            solve_normal_equation(&s.device, &s.weights, &s.mask, alpha, 1e-10, 200, None).unwrap();
        let b = rhs(&s.weights, &s.mask).unwrap();
        let mut scaled = b.clone();
        scaled.scale(1.0 / alpha);
        let diff = rec.minimizer.sub(&scaled).unwrap();
        let rel = s.weights.norm(&diff).unwrap() / s.weights.norm(&scaled).unwrap();
        assert!(rel < 1e-2, "relative deviation from rhs/alpha: {rel}");
    }

    #[test]
    fn cg_counts_two_measurements_per_iteration() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let rec =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, 1e-8, 400, None).unwrap();
        assert!(rec.converged, "residual stalled at {}", rec.residual);
        assert!(rec.cg_iters > 0);
        assert_eq!(s.device.measurement_count(), 2 * rec.cg_iters as u64);

        // A warm start pays two further measurements for its residual.
        let before = s.device.measurement_count();
        let warm = solve_normal_equation(
            &s.device,
            &s.weights,
            &s.mask,
            1e-2,
            1e-8,
            400,
            Some(&rec.minimizer),
        )
        .unwrap();
        let used = s.device.measurement_count() - before;
        assert_eq!(used, 2 * warm.cg_iters as u64 + 2);
        assert!(warm.cg_iters <= 1, "warm restart re-iterated {} times", warm.cg_iters);
    }

    #[test]
    fn minimizer_is_unique_across_starts() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let tol = 1e-8;
        let cold =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, tol, 400, None).unwrap();
        let start = random_masked(&s.mask, 7);
        let other =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, tol, 400, Some(&start))
                .unwrap();
        assert!(cold.converged && other.converged);
        let diff = cold.minimizer.sub(&other.minimizer).unwrap();
        let rel = s.weights.norm(&diff).unwrap() / s.weights.norm(&cold.minimizer).unwrap();
        assert!(rel <= 10.0 * tol, "iterates differ by {rel}");
    }

    #[test]
    fn masked_operator_is_positive_definite() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let alpha = 1e-3;
        let probe = random_masked(&s.mask, 3);
        let k_norm = {
            let kp = apply_k(&s.device, &probe).unwrap();
            s.weights.norm(&kp).unwrap() / s.weights.norm(&probe).unwrap()
        };
        for seed in 0..5 {
            let f = random_masked(&s.mask, 100 + seed);
            let af = apply_normal_operator(&s.device, &s.mask, alpha, &f).unwrap();
            let rayleigh = s.weights.inner(&f, &af).unwrap();
            let ff = s.weights.inner(&f, &f).unwrap();
            assert!(
                rayleigh >= (alpha - 1e-3 * k_norm) * ff,
                "seed {seed}: rayleigh {} below floor",
                rayleigh / ff
            );
        }
    }

    #[test]
    fn energy_matches_interior_misfit() {
        let s = setup(201, |_| 1.0, [0.3, 0.4]);
        let alpha = 1e-2;
        let f = {
            let time = s.device.time();
            let mut f = SpaceTimeField::from_fn(time, 2, |t, j| {
                ((std::f64::consts::PI * t).sin() + 0.4 * (2.0 * std::f64::consts::PI * t / 2.0).cos())
                    * (1.0 + 0.3 * j as f64)
            });
            s.mask.project(&mut f);
            f
        };
        let e = energy(&s.device, &s.weights, &f, alpha).unwrap();
        let ones_volume = natural_volume(
            &s.speed,
            &InteriorField::constant(s.speed.grids().clone(), 1.0),
        )
        .unwrap();
        let ff = s.weights.inner(&f, &f).unwrap();
        let u = s.device.snapshot(&f).unwrap();
        let diff = u.map(|v| v - 1.0);
        let misfit = crate::geometry::mu_inner(&s.speed, &diff, &diff).unwrap();
        let lhs = e + ones_volume - alpha * ff;
        assert!(
            (lhs - misfit).abs() <= 0.02 * misfit.max(1.0),
            "energy identity off: {lhs} vs {misfit}"
        );
    }

    #[test]
    fn minimizer_is_stationary() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let alpha = 1e-2;
        let rec =
            solve_normal_equation(&s.device, &s.weights, &s.mask, alpha, 1e-8, 400, None).unwrap();
        let e_min = energy(&s.device, &s.weights, &rec.minimizer, alpha).unwrap();
        let scale = s.weights.norm(&rec.minimizer).unwrap();
        for seed in 0..3 {
            let g = random_masked(&s.mask, 40 + seed);
            for delta in [1e-2, -1e-2] {
                let mut perturbed = rec.minimizer.clone();
                perturbed.axpy(delta * scale / s.weights.norm(&g).unwrap(), &g).unwrap();
                let e = energy(&s.device, &s.weights, &perturbed, alpha).unwrap();
                assert!(
                    e_min <= e + 1e-8 * e.abs().max(1.0),
                    "seed {seed}, delta {delta}: {e_min} > {e}"
                );
            }
        }
    }

    #[test]
    fn continuation_recovers_influence_volume() {
        let s = setup(201, |_| 1.0, [0.3, 0.4]);
        let report = alpha_continuation(
            &s.device,
            &s.weights,
            &s.mask,
            &DEFAULT_ALPHA_SCHEDULE,
            1e-8,
            600,
            None,
            true,
        )
        .unwrap();
        let oracle = report.oracle_volume.unwrap();
        assert!((oracle - 0.7).abs() <= 0.01, "oracle volume {oracle}");
        // The target indicator jumps at the interior influence boundary, so
        // the optimal source concentrates at the leading window edge and is
        // reachable only in the closure: the volume climbs toward the oracle
        // without a rate. At α = 1e-4 it still sits about 5% below; the
        // acceptance suite tracks the tighter pinned figure.
        let volume = report.volume();
        assert!(
            (volume - 0.7).abs() <= 0.06 * 0.7,
            "volume estimate {volume} vs oracle 0.7"
        );
        assert!(
            report.records.windows(2).all(|w| w[1].volume > w[0].volume),
            "volumes should climb along the schedule"
        );
        // m_inf = 1 for unit speed on the unit interval.
        assert!(report.volume_monotone(0.01));
        assert!(report.records.iter().all(|r| r.converged));
        assert_eq!(
            report.measurements,
            2 * report.total_cg_iters() as u64
        );
        // Focusing improves as the regularization relaxes.
        let early = verify_theorem2(&s.device, s.mask.gamma(), s.mask.tau(), &report.records[0].minimizer)
            .unwrap();
        let late = report.interior_l2_error.unwrap();
        assert!(late < early, "focusing error grew: {early} -> {late}");
    }

    #[test]
    fn continuation_covers_fast_medium() {
        let s = setup(201, |_| 2.0, [0.3, 0.4]);
        let report = alpha_continuation(
            &s.device,
            &s.weights,
            &s.mask,
            &DEFAULT_ALPHA_SCHEDULE,
            1e-8,
            600,
            None,
            false,
        )
        .unwrap();
        // At c = 2 the two budgets cover the whole interval: m_inf = 1/4.
        let oracle = report.oracle_volume.unwrap();
        assert!((oracle - 0.25).abs() <= 0.005, "oracle volume {oracle}");
        let volume = report.volume();
        assert!(
            (volume - 0.25).abs() <= 0.05 * 0.25,
            "volume estimate {volume} vs 0.25"
        );
    }

    #[test]
    fn full_domain_budget_focuses_to_one() {
        // Budgets covering the whole manifold leave no indicator jump to
        // chase, so the focusing error is small already at α = 1e-4.
        let s = setup(401, |_| 1.0, [1.0, 1.0]);
        let report = alpha_continuation(
            &s.device,
            &s.weights,
            &s.mask,
            &DEFAULT_ALPHA_SCHEDULE,
            1e-8,
            600,
            None,
            true,
        )
        .unwrap();
        let oracle = report.oracle_volume.unwrap();
        assert!((oracle - 1.0).abs() <= 1e-12, "oracle volume {oracle}");
        let err = report.interior_l2_error.unwrap();
        assert!(err <= 0.1, "full-domain focusing error {err}");
    }

    #[test]
    fn warm_starts_beat_cold_starts() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let schedule = [1e-1, 1e-2, 1e-3];
        let warm = alpha_continuation(&s.device, &s.weights, &s.mask, &schedule, 1e-7, 400, None, false)
            .unwrap();
        let mut cold_total = 0;
        for &alpha in &schedule {
            let rec =
                solve_normal_equation(&s.device, &s.weights, &s.mask, alpha, 1e-7, 400, None)
                    .unwrap();
            cold_total += rec.cg_iters;
        }
        assert!(
            warm.total_cg_iters() <= cold_total,
            "warm {} vs cold {cold_total}",
            warm.total_cg_iters()
        );
    }

    #[test]
    fn single_entry_schedule_equals_direct_solve() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let report =
            alpha_continuation(&s.device, &s.weights, &s.mask, &[1e-2], 1e-8, 400, None, false).unwrap();
        let direct =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, 1e-8, 400, None).unwrap();
        assert_eq!(report.records[0].cg_iters, direct.cg_iters);
        assert_eq!(report.records[0].minimizer, direct.minimizer);
        assert_eq!(report.records[0].volume, direct.volume);
    }

    #[test]
    fn schedule_validation() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        for bad in [vec![], vec![1e-2, 1e-2], vec![1e-3, 1e-2], vec![1e-2, 0.0]] {
            assert!(
                alpha_continuation(&s.device, &s.weights, &s.mask, &bad, 1e-8, 100, None, false)
                    .is_err(),
                "schedule {bad:?} accepted"
            );
        }
        assert!(
            solve_normal_equation(&s.device, &s.weights, &s.mask, 0.0, 1e-8, 100, None).is_err()
        );
        assert!(
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-2, 0.0, 100, None).is_err()
        );
    }

    #[test]
    fn iteration_cap_flags_without_failing() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let rec = solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-3, 1e-12, 2, None)
            .unwrap();
        assert!(!rec.converged);
        assert_eq!(rec.cg_iters, 2);
        assert!(rec.residual > 1e-12);
    }

    #[test]
    fn symmetry_defect_is_small_on_interval() {
        let s = setup(201, |_| 1.0, [0.3, 0.4]);
        let time = s.device.time();
        let f = SpaceTimeField::from_fn(time, 2, |t, j| {
            (std::f64::consts::PI * t + 0.2 * j as f64).sin()
        });
        let h = SpaceTimeField::from_fn(time, 2, |t, j| {
            (1.5 * std::f64::consts::PI * t - 0.4 * j as f64).cos()
        });
        let defect = k_symmetry_defect(&s.device, &s.weights, &f, &h).unwrap();
        assert!(defect < 1e-3, "symmetry defect {defect}");
        assert_eq!(s.device.measurement_count(), 4);
    }

    #[test]
    fn report_json_shape() {
        let s = setup(101, |_| 1.0, [0.3, 0.4]);
        let report = alpha_continuation(
            &s.device,
            &s.weights,
            &s.mask,
            &[1e-1, 1e-2],
            1e-7,
            300,
            None,
            true,
        )
        .unwrap();
        let value = report.to_json();
        let obj = value.as_object().unwrap();
        for key in ["alpha", "volume", "cg_iters", "residual", "measurements"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(obj["alpha"].as_array().unwrap().len(), 2);
        assert!(obj.contains_key("oracle_volume"));
        assert!(obj.contains_key("interior_l2_error"));
    }

    #[test]
    fn theorem2_error_for_degenerate_budget_is_the_slab_weight() {
        let s = setup(201, |_| 1.0, [0.0, 0.0]);
        let rec =
            solve_normal_equation(&s.device, &s.weights, &s.mask, 1e-3, 1e-8, 100, None).unwrap();
        let err = verify_theorem2(&s.device, s.mask.gamma(), s.mask.tau(), &rec.minimizer).unwrap();
        // The zero-budget influence set is the two boundary points: in the
        // continuum a null set (the focusing error is 0 there), on the grid
        // a pair of half-weight cells whose mass vanishes under refinement.
        let h = 1.0f64 / 200.0;
        assert!(
            (err - h.sqrt()).abs() < 1e-12,
            "degenerate focusing error {err} vs sqrt(h) = {}",
            h.sqrt()
        );
    }
}
