//! Boundary measurement abstraction: maps a Neumann source to its Dirichlet
//! trace, either by running the solver or by replaying recorded traces.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{InteriorField, SpeedField};
use crate::io;

use super::{simulate, SolverSettings, SpaceTimeField, TimeGrid};

/// Additive per-sample Gaussian noise with amplitude `relative_level` times
/// the RMS of the clean trace. The stream is seeded from `seed` combined
/// with the source hash, so repeated measurements are reproducible and
/// independent of call order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub relative_level: f64,
    pub seed: u64,
}

enum Backend {
    Simulated {
        speed: Arc<SpeedField>,
        settings: SolverSettings,
    },
    Replay {
        dir: PathBuf,
        time: TimeGrid,
        n_boundary: usize,
    },
}

/// A source of boundary traces with a strict measurement budget counter.
///
/// The interior of the domain is observable only through [`Self::snapshot`],
/// which is disabled unless the device is built with the verification
/// channel open; reconstruction code paths consume traces alone.
pub struct MeasurementDevice {
    backend: Backend,
    noise: Option<NoiseModel>,
    record_dir: Option<PathBuf>,
    verification: bool,
    measurements: AtomicU64,
    snapshots: AtomicU64,
}

impl MeasurementDevice {
    /// Device backed by the time-domain solver.
    pub fn simulated(speed: Arc<SpeedField>, settings: SolverSettings) -> Result<Self> {
        settings.validate_against(&speed)?;
        Ok(MeasurementDevice {
            backend: Backend::Simulated { speed, settings },
            noise: None,
            record_dir: None,
            verification: false,
            measurements: AtomicU64::new(0),
            snapshots: AtomicU64::new(0),
        })
    }

    /// Device that replays traces previously recorded with
    /// [`Self::recording`], keyed by source content hash.
    pub fn replay(dir: impl Into<PathBuf>, time: TimeGrid, n_boundary: usize) -> Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "replay directory {} does not exist",
                dir.display()
            )));
        }
        Ok(MeasurementDevice {
            backend: Backend::Replay {
                dir,
                time,
                n_boundary,
            },
            noise: None,
            record_dir: None,
            verification: false,
            measurements: AtomicU64::new(0),
            snapshots: AtomicU64::new(0),
        })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = (noise.relative_level > 0.0).then_some(noise);
        self
    }

    /// Tee every clean trace into `dir` for later replay.
    pub fn recording(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    /// Open the verification channel that exposes interior snapshots.
    pub fn with_verification(mut self, on: bool) -> Self {
        self.verification = on;
        self
    }

    pub fn time(&self) -> TimeGrid {
        match &self.backend {
            Backend::Simulated { settings, .. } => settings.time(),
            Backend::Replay { time, .. } => *time,
        }
    }

    pub fn n_boundary(&self) -> usize {
        match &self.backend {
            Backend::Simulated { speed, .. } => speed.grids().boundary.len(),
            Backend::Replay { n_boundary, .. } => *n_boundary,
        }
    }

    /// Speed field behind a simulated backend, if any.
    pub fn speed(&self) -> Option<&Arc<SpeedField>> {
        match &self.backend {
            Backend::Simulated { speed, .. } => Some(speed),
            Backend::Replay { .. } => None,
        }
    }

    pub fn measurement_count(&self) -> u64 {
        self.measurements.load(Ordering::SeqCst)
    }

    pub fn snapshot_count(&self) -> u64 {
        self.snapshots.load(Ordering::SeqCst)
    }

    /// Measure the boundary trace of the wave driven by `f`.
    pub fn measure(&self, f: &SpaceTimeField) -> Result<SpaceTimeField> {
        self.measurements.fetch_add(1, Ordering::SeqCst);
        let hash = source_hash(f);
        let mut trace = match &self.backend {
            Backend::Simulated { speed, settings } => simulate(speed, f, settings)?.0,
            Backend::Replay {
                dir,
                time,
                n_boundary,
            } => {
                if f.time() != *time || f.n_boundary() != *n_boundary {
                    return Err(Error::GridMismatch(
                        "source does not match the replay device layout".into(),
                    ));
                }
                let path = trace_path(dir, &hash);
                if !path.is_file() {
                    return Err(Error::ReplayMiss { hash });
                }
                let stored = io::read_trace_csv(&path)?;
                f.check_same_layout(&stored)?;
                stored
            }
        };
        if let Some(dir) = &self.record_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            io::write_trace_csv(&trace_path(dir, &hash), &trace)?;
        }
        if let Some(noise) = self.noise {
            perturb(&mut trace, noise, &hash);
        }
        Ok(trace)
    }

    /// Interior snapshot at `t = T`, available only through the verification
    /// channel of a simulated device.
    pub fn snapshot(&self, f: &SpaceTimeField) -> Result<InteriorField> {
        if !self.verification {
            return Err(Error::VerificationDisabled);
        }
        match &self.backend {
            Backend::Simulated { speed, settings } => {
                self.snapshots.fetch_add(1, Ordering::SeqCst);
                Ok(simulate(speed, f, settings)?.1)
            }
            Backend::Replay { .. } => Err(Error::config(
                "replay devices store traces only; snapshots need a simulated backend",
            )),
        }
    }
}

fn trace_path(dir: &Path, hash: &str) -> PathBuf {
    dir.join(format!("trace-{hash}.csv"))
}

/// Content hash of a source field: first 16 hex digits of the SHA-256 of its
/// layout and sample bits.
pub fn source_hash(f: &SpaceTimeField) -> String {
    let mut hasher = Sha256::new();
    hasher.update(f.time().dt().to_le_bytes());
    hasher.update((f.time().steps() as u64).to_le_bytes());
    hasher.update((f.n_boundary() as u64).to_le_bytes());
    for v in f.values() {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn perturb(trace: &mut SpaceTimeField, noise: NoiseModel, hash: &str) {
    let n = trace.values().len();
    if n == 0 {
        return;
    }
    let rms = (trace.values().iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    let sigma = noise.relative_level * rms;
    if sigma == 0.0 {
        return;
    }
    let hash_bits = u64::from_str_radix(&hash[..16], 16).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed ^ hash_bits);
    let values = trace.values_mut();
    let mut i = 0;
    while i < n {
        // Box-Muller transform; each uniform pair yields two normals.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        values[i] += sigma * r * c;
        i += 1;
        if i < n {
            values[i] += sigma * r * s;
            i += 1;
        }
    }
}
