//! Sound-speed fields and the weighted measures they induce.
//!
//! A speed field `c > 0` equips the domain with the travel-time metric
//! `c^{-2} dx^2`. The associated natural interior measure has density
//! `c^{-2}` and the boundary measure has density `c^{1-n}` against Euclidean
//! boundary length, where `n` is the spatial dimension; both reduce to the
//! plain counting measure at interval endpoints.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::grid::{Grids, Layout};
use crate::geometry::travel::DistanceAtlas;

/// Analytic form behind a speed field, kept so that quadrature can sample the
/// profile between grid nodes exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedProfile {
    Constant {
        value: f64,
    },
    Linear {
        base: f64,
        gradient: [f64; 2],
    },
    /// Gaussian bump `base + amplitude * exp(-|p-center|^2 / (2 width^2))`.
    SmoothBump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    /// Values given only at grid nodes; evaluated between nodes by linear
    /// interpolation.
    Sampled,
}

/// Positive wave speed sampled on the grids of one domain.
pub struct SpeedField {
    grids: Arc<Grids>,
    samples: Vec<f64>,
    boundary_samples: Vec<f64>,
    profile: SpeedProfile,
    c_min: f64,
    c_max: f64,
    atlas: OnceLock<Arc<DistanceAtlas>>,
}

impl std::fmt::Debug for SpeedField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpeedField")
            .field("profile", &self.profile)
            .field("c_min", &self.c_min)
            .field("c_max", &self.c_max)
            .field("nodes", &self.samples.len())
            .finish()
    }
}

impl SpeedField {
    pub fn constant(grids: Arc<Grids>, value: f64) -> Result<Self> {
        Self::with_profile(grids, SpeedProfile::Constant { value })
    }

    pub fn linear(grids: Arc<Grids>, base: f64, gradient: [f64; 2]) -> Result<Self> {
        Self::with_profile(grids, SpeedProfile::Linear { base, gradient })
    }

    pub fn smooth_bump(
        grids: Arc<Grids>,
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    ) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::config(format!(
                "bump width must be positive, got {width}"
            )));
        }
        Self::with_profile(
            grids,
            SpeedProfile::SmoothBump {
                base,
                amplitude,
                center,
                width,
            },
        )
    }

    fn with_profile(grids: Arc<Grids>, profile: SpeedProfile) -> Result<Self> {
        let eval = |p: [f64; 2]| profile_eval(&profile, p).unwrap();
        let samples: Vec<f64> = grids.interior.points().iter().map(|&p| eval(p)).collect();
        let boundary_samples: Vec<f64> = grids.boundary.points().iter().map(|&p| eval(p)).collect();
        Self::assemble(grids, samples, boundary_samples, profile)
    }

    /// Sample an arbitrary smooth function; between nodes the field falls
    /// back to interpolation of the samples.
    pub fn from_fn(grids: Arc<Grids>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let samples: Vec<f64> = grids.interior.points().iter().map(|&p| f(p)).collect();
        let boundary_samples: Vec<f64> = grids.boundary.points().iter().map(|&p| f(p)).collect();
        Self::assemble(grids, samples, boundary_samples, SpeedProfile::Sampled)
    }

    /// Use explicit per-node samples; boundary values are taken from the
    /// coinciding grid nodes, or the nearest interior node on the disk.
    pub fn from_samples(grids: Arc<Grids>, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grids.interior.len() {
            return Err(Error::GridMismatch(format!(
                "{} speed samples for a grid of {} nodes",
                samples.len(),
                grids.interior.len()
            )));
        }
        let boundary_samples: Vec<f64> = (0..grids.boundary.len())
            .map(|j| match grids.boundary.grid_node(j) {
                Some(id) => samples[id],
                None => samples[grids.interior.nearest_node(grids.boundary.point(j))],
            })
            .collect();
        Self::assemble(grids, samples, boundary_samples, SpeedProfile::Sampled)
    }

    fn assemble(
        grids: Arc<Grids>,
        samples: Vec<f64>,
        boundary_samples: Vec<f64>,
        profile: SpeedProfile,
    ) -> Result<Self> {
        for &v in samples.iter().chain(&boundary_samples) {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!(
                    "speed samples must be positive and finite, got {v}"
                )));
            }
        }
        let c_min = samples
            .iter()
            .chain(&boundary_samples)
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let c_max = samples
            .iter()
            .chain(&boundary_samples)
            .cloned()
            .fold(0.0, f64::max);
        Ok(SpeedField {
            grids,
            samples,
            boundary_samples,
            profile,
            c_min,
            c_max,
            atlas: OnceLock::new(),
        })
    }

    pub fn grids(&self) -> &Arc<Grids> {
        &self.grids
    }

    pub fn profile(&self) -> SpeedProfile {
        self.profile
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Speed at interior node `id`.
    pub fn at_node(&self, id: usize) -> f64 {
        self.samples[id]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Speed at boundary node `j`.
    pub fn at_boundary_node(&self, j: usize) -> f64 {
        self.boundary_samples[j]
    }

    /// Natural interior measure density `c^{-2}` at node `id`.
    pub fn interior_density(&self, id: usize) -> f64 {
        let c = self.samples[id];
        1.0 / (c * c)
    }

    /// Boundary measure density `c^{1-n}` at boundary node `j`.
    pub fn boundary_density(&self, j: usize) -> f64 {
        let c = self.boundary_samples[j];
        c.powi(1 - self.grids.dim() as i32)
    }

    /// Evaluate the speed at an arbitrary point of the closed domain, using
    /// the analytic profile when one is available.
    pub fn eval_at(&self, p: [f64; 2]) -> f64 {
        if let Some(v) = profile_eval(&self.profile, p) {
            return v;
        }
        match &self.grids.interior.layout {
            Layout::Line { n } => {
                let h = self.grids.h();
                let s = (p[0] / h).clamp(0.0, (*n - 1) as f64);
                let i = (s.floor() as usize).min(*n - 2);
                let t = s - i as f64;
                (1.0 - t) * self.samples[i] + t * self.samples[i + 1]
            }
            Layout::Grid(m) => {
                let h = self.grids.h();
                let sx = ((p[0] - m.x0) / h).clamp(0.0, (m.nx - 1) as f64);
                let sy = ((p[1] - m.y0) / h).clamp(0.0, (m.ny - 1) as f64);
                let ix = (sx.floor() as usize).min(m.nx - 2);
                let iy = (sy.floor() as usize).min(m.ny - 2);
                let tx = sx - ix as f64;
                let ty = sy - iy as f64;
                let mut acc = 0.0;
                let mut wacc = 0.0;
                for (dx, dy, w) in [
                    (0, 0, (1.0 - tx) * (1.0 - ty)),
                    (1, 0, tx * (1.0 - ty)),
                    (0, 1, (1.0 - tx) * ty),
                    (1, 1, tx * ty),
                ] {
                    if let Some(id) = m.id_at((ix + dx) as i64, (iy + dy) as i64) {
                        acc += w * self.samples[id];
                        wacc += w;
                    }
                }
                if wacc > 0.0 {
                    acc / wacc
                } else {
                    self.samples[self.grids.interior.nearest_node(p)]
                }
            }
        }
    }

    /// Travel-time fields from every boundary node, built on first use and
    /// shared afterwards.
    pub fn distance_atlas(&self) -> Result<Arc<DistanceAtlas>> {
        if let Some(atlas) = self.atlas.get() {
            return Ok(atlas.clone());
        }
        let built = Arc::new(DistanceAtlas::build(self)?);
        Ok(self.atlas.get_or_init(|| built).clone())
    }
}

pub(crate) fn profile_eval(profile: &SpeedProfile, p: [f64; 2]) -> Option<f64> {
    match *profile {
        SpeedProfile::Constant { value } => Some(value),
        SpeedProfile::Linear { base, gradient } => {
            Some(base + gradient[0] * p[0] + gradient[1] * p[1])
        }
        SpeedProfile::SmoothBump {
            base,
            amplitude,
            center,
            width,
        } => {
            let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
            Some(base + amplitude * (-d2 / (2.0 * width * width)).exp())
        }
        SpeedProfile::Sampled => None,
    }
}
