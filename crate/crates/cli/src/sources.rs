//! Deterministic test sources for verification commands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavecontrol::forward::{SpaceTimeField, TimeGrid};
use wavecontrol::geometry::BoundaryProfile;

/// Seeded band-limited source: per boundary node a combination of the first
/// few sine modes of the measurement window, so the trace is smooth and the
/// solver resolves it already on coarse grids.
pub fn band_limited(time: TimeGrid, n_boundary: usize, seed: u64) -> SpaceTimeField {
    const MODES: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<f64> = (0..n_boundary * MODES)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let two_t = time.two_t();
    SpaceTimeField::from_fn(time, n_boundary, |t, j| {
        (0..MODES)
            .map(|m| {
                let omega = std::f64::consts::PI * (m + 1) as f64 / two_t;
                coeffs[j * MODES + m] * (omega * t).sin()
            })
            .sum()
    })
}

/// Smooth bump `exp(-1/(s(1-s)))` on the per-node support `[T - τ(j), T]`,
/// vanishing to all orders at both ends. Nodes with a non-positive budget
/// stay silent. Sources of this shape excite only the domain of influence
/// of `τ` by time `T`.
pub fn budget_bump(time: TimeGrid, tau: &BoundaryProfile) -> SpaceTimeField {
    let t_half = time.horizon();
    SpaceTimeField::from_fn(time, tau.len(), |t, j| {
        let width = tau.value(j).min(t_half);
        if width <= 0.0 {
            return 0.0;
        }
        let s = (t - (t_half - width)) / width;
        if s <= 0.0 || s >= 1.0 {
            0.0
        } else {
            (-1.0 / (s * (1.0 - s))).exp()
        }
    })
}
