//! Domains of influence of a boundary subset under a time budget.
//!
//! Given a subset `Γ` of boundary nodes and a time budget `τ` on the
//! boundary, the domain of influence `M(Γ, τ)` collects the points reachable
//! from some `y ∈ Γ` within time `τ(y)`. It is described by the signed
//! arrival margin
//!
//! ```text
//!     r_{Γ,τ}(x) = min_{y ∈ Γ} ( d(x, y) − τ(y) ),
//! ```
//!
//! which is 1-Lipschitz in the travel-time metric; the closed domain is
//! `{r ≤ 0}` and its interior counterpart is `{r < 0}`. Exact zeros belong
//! to the closed set only, and the `{|r| ≤ h}` shell shrinks linearly with
//! the grid, which is how the null-boundary property shows up at finite
//! resolution.

use crate::error::{Error, Result};
use crate::geometry::{natural_volume, BoundaryProfile, InteriorField, SpeedField};

/// Nonempty set of boundary node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySubset {
    indices: Vec<usize>,
    total: usize,
}

impl BoundarySubset {
    /// The whole boundary of a grid with `total` boundary nodes.
    pub fn whole(total: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::Empty("boundary"));
        }
        Ok(BoundarySubset {
            indices: (0..total).collect(),
            total,
        })
    }

    /// An explicit subset; indices are sorted and deduplicated.
    pub fn from_indices(total: usize, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.is_empty() {
            return Err(Error::Empty("boundary subset"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= total) {
            return Err(Error::config(format!(
                "boundary node {bad} out of range ({total} nodes)"
            )));
        }
        Ok(BoundarySubset { indices, total })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of boundary nodes of the underlying grid.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn is_whole(&self) -> bool {
        self.indices.len() == self.total
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }
}

/// Closed and open influence indicators with their volumes and the signed
/// arrival margin that generated them.
#[derive(Debug, Clone)]
pub struct InfluenceResult {
    /// Indicator of `{r ≤ 0}` (values 0 or 1).
    pub closed: InteriorField,
    /// Indicator of `{r < 0}`.
    pub open: InteriorField,
    /// The signed arrival margin `r_{Γ,τ}`.
    pub r_field: InteriorField,
    /// Natural volume of the closed set.
    pub volume_closed: f64,
    /// Natural volume of the open set.
    pub volume_open: f64,
}

fn check_profile(c: &SpeedField, gamma: &BoundarySubset, tau: &BoundaryProfile) -> Result<()> {
    let m = c.grids().boundary.len();
    if gamma.total() != m {
        return Err(Error::GridMismatch(format!(
            "boundary subset indexes {} nodes, grid has {m}",
            gamma.total()
        )));
    }
    if tau.len() != m {
        return Err(Error::GridMismatch(format!(
            "time budget has {} values, grid has {m} boundary nodes",
            tau.len()
        )));
    }
    Ok(())
}

/// Signed arrival margin `r_{Γ,τ}(x) = min_{y ∈ Γ}(d(x,y) − τ(y))` over the
/// interior grid.
pub fn r_gamma_tau(
    c: &SpeedField,
    gamma: &BoundarySubset,
    tau: &BoundaryProfile,
) -> Result<InteriorField> {
    check_profile(c, gamma, tau)?;
    let atlas = c.distance_atlas()?;
    let n = c.grids().interior.len();
    let mut r = vec![f64::INFINITY; n];
    for j in gamma.iter() {
        let d = atlas.field(j);
        let t = tau.value(j);
        for (ri, &di) in r.iter_mut().zip(d.values()) {
            let v = di - t;
            if v < *ri {
                *ri = v;
            }
        }
    }
    InteriorField::from_values(c.grids().clone(), r)
}

/// Closed and open domains of influence of `(Γ, τ)` with their volumes.
pub fn domain_of_influence(
    c: &SpeedField,
    gamma: &BoundarySubset,
    tau: &BoundaryProfile,
) -> Result<InfluenceResult> {
    let r_field = r_gamma_tau(c, gamma, tau)?;
    let closed = r_field.map(|r| if r <= 0.0 { 1.0 } else { 0.0 });
    let open = r_field.map(|r| if r < 0.0 { 1.0 } else { 0.0 });
    let volume_closed = natural_volume(c, &closed)?;
    let volume_open = natural_volume(c, &open)?;
    Ok(InfluenceResult {
        closed,
        open,
        r_field,
        volume_closed,
        volume_open,
    })
}

/// Natural volume of the shell `{|r| ≤ width}` of an arrival margin field.
///
/// For positive budgets the influence boundary is a null set, and this shell
/// volume decays linearly in `width` at the rate of the level-set measure.
pub fn shell_volume(c: &SpeedField, r_field: &InteriorField, width: f64) -> Result<f64> {
    let shell = r_field.map(|r| if r.abs() <= width { 1.0 } else { 0.0 });
    natural_volume(c, &shell)
}

/// Replace `τ` by a nearby simple function taking few distinct values.
///
/// Every node moves to the midpoint `τ - eps/2` and is then snapped to a
/// uniform ladder of at most `ceil(range/eps) + 1` levels; whenever snapping
/// would leave the open window `(τ - eps, τ)` the exact midpoint is kept, so
/// the pointwise guarantee always holds.
pub fn simple_approximation(tau: &BoundaryProfile, eps: f64) -> Result<BoundaryProfile> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::config(format!("eps must be positive, got {eps}")));
    }
    let min = tau.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let max = tau.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    // One more level than eps strictly needs keeps the spacing at most
    // eps·L/(L+1): the nearest level to any midpoint t - eps/2 then sits
    // inside (t - eps, t) with a genuine margin, robust to roundoff.
    let levels = (range / eps).ceil().max(1.0) + 1.0;
    let q = range / levels;
    let base = min - 0.5 * eps;
    let values = tau
        .values()
        .iter()
        .map(|&t| {
            let mid = t - 0.5 * eps;
            let snapped = if q > 0.0 {
                base + ((mid - base) / q).round() * q
            } else {
                mid
            };
            if snapped > t - eps && snapped < t {
                snapped
            } else {
                mid
            }
        })
        .collect();
    BoundaryProfile::from_values(values)
}
