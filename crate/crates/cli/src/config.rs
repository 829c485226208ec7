//! Experiment configuration: a sectioned TOML file resolved into core types.
//!
//! Every referenced file is checked at load time, numeric invariants are
//! validated before any computation starts, and the resolved configuration is
//! echoed verbatim into every report for provenance.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wavecontrol::forward::{MeasurementDevice, NoiseModel, SolverSettings, TimeGrid};
use wavecontrol::geometry::{build_grids, BoundaryProfile, DomainSpec, Grids, Shape, SpeedField};
use wavecontrol::influence::BoundarySubset;
use wavecontrol::io::{read_boundary_profile_csv, read_elements_csv, read_speed_samples_csv};
use wavecontrol::reconstruct::AscentOptions;

use crate::CliError;

/// Full experiment description as read from the TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainSection,
    pub speed: SpeedSection,
    pub time: TimeSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetSection>,
    #[serde(default)]
    pub regularization: RegularizationSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub device: DeviceSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reconstruct: Option<ReconstructSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardSection>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// `interval`, `rectangle`, or `disk`.
    pub shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Interior nodes per axis; the spatial step is `extent / (resolution - 1)`.
    pub interior_resolution: usize,
    /// Boundary node count (2 on an interval).
    pub boundary_resolution: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedSection {
    /// `constant`, `linear`, `sine`, or `file`.
    pub profile: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    /// Control time `T`; measurements run over `(0, 2T)`.
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    /// Control subset Γ: `"whole"` (default) or an explicit node list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<GammaSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Named(String),
    Nodes(Vec<usize>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    /// Strictly decreasing continuation schedule.
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_schedule() -> Vec<f64> {
    vec![1e-1, 1e-2, 1e-3, 1e-4]
}
fn default_tol() -> f64 {
    1e-7
}
fn default_max_iters() -> usize {
    400
}

impl Default for RegularizationSection {
    fn default() -> Self {
        RegularizationSection {
            schedule: default_schedule(),
            tol: default_tol(),
            max_iters: default_max_iters(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// Relative noise amplitude; zero disables the noise model.
    pub level: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    /// `simulated` (default) or `replay`.
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Trace directory for the replay backend, or the recording target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Record every simulated measurement into `dir`.
    #[serde(default)]
    pub record: bool,
}

fn default_backend() -> String {
    "simulated".into()
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            backend: default_backend(),
            dir: None,
            record: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    /// `geometric`, `pde`, or `both`.
    pub backend: String,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            backend: "both".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_file: Option<String>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_margin_tol")]
    pub margin_tol: f64,
    #[serde(default = "default_step_tol")]
    pub step_tol: f64,
    #[serde(default = "default_bisections")]
    pub bisections: usize,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default = "default_dedupe_tol")]
    pub dedupe_tol: f64,
}

fn default_eps() -> f64 {
    0.04
}
fn default_margin_tol() -> f64 {
    0.1
}
fn default_step_tol() -> f64 {
    0.01
}
fn default_bisections() -> usize {
    12
}
fn default_max_cycles() -> usize {
    64
}
fn default_dedupe_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardSection {
    /// Neumann source trace CSV on the solver's time grid.
    pub source: String,
    /// Interpret the file as a plain Neumann datum and rescale it by the
    /// boundary speed factor the weighted problem expects.
    #[serde(default)]
    pub plain_neumann: bool,
    /// Also write the interior snapshot at `T` (requires verification).
    #[serde(default)]
    pub snapshot: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub directory: String,
    /// Enables the interior snapshot channel used by verification commands.
    #[serde(default)]
    pub verification: bool,
}

fn default_out_dir() -> String {
    "out".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_out_dir(),
            verification: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Relative tolerance for the boundary-data inner-product identity.
    #[serde(default = "default_blago_tol")]
    pub blago_tol: f64,
    /// Relative tolerance for the cross-term identity.
    #[serde(default = "default_blago_tol")]
    pub cross_tol: f64,
    /// Relative tolerance for the time-integration adjoint identity.
    #[serde(default = "default_adjoint_tol")]
    pub adjoint_tol: f64,
    /// Bound on the measured symmetry defect of the connecting operator
    /// (a discretization-scale quantity that shrinks under grid refinement).
    #[serde(default = "default_symmetry_tol")]
    pub symmetry_tol: f64,
    /// Snapshot mass fraction allowed outside the dilated influence domain.
    #[serde(default = "default_finite_speed_tol")]
    pub finite_speed_tol: f64,
    /// Number of random source pairs per identity check.
    #[serde(default = "default_pairs")]
    pub pairs: usize,
}

fn default_blago_tol() -> f64 {
    0.02
}
fn default_adjoint_tol() -> f64 {
    1e-12
}
fn default_symmetry_tol() -> f64 {
    1e-5
}
fn default_finite_speed_tol() -> f64 {
    1e-6
}
fn default_pairs() -> usize {
    5
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            blago_tol: default_blago_tol(),
            cross_tol: default_blago_tol(),
            adjoint_tol: default_adjoint_tol(),
            symmetry_tol: default_symmetry_tol(),
            finite_speed_tol: default_finite_speed_tol(),
            pairs: default_pairs(),
        }
    }
}

/// Command-line overrides applied after the file is parsed.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub verification: Option<bool>,
}

fn config_err(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

impl ExperimentConfig {
    /// Parse and validate a configuration file, applying overrides.
    ///
    /// Relative paths inside the file are resolved against the file's own
    /// directory. TOML syntax errors keep their line/column diagnostics.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        if let Some(dir) = &overrides.out_dir {
            config.output.directory = dir.display().to_string();
        }
        if let Some(seed) = overrides.seed {
            if let Some(noise) = &mut config.noise {
                noise.seed = seed;
            }
        }
        if let Some(v) = overrides.verification {
            config.output.verification = v;
        }
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |file: &mut String| {
            let p = Path::new(file);
            if p.is_relative() {
                *file = base.join(p).display().to_string();
            }
        };
        if let Some(file) = &mut self.speed.file {
            resolve(file);
        }
        if let Some(budget) = &mut self.budget {
            if let Some(file) = &mut budget.file {
                resolve(file);
            }
        }
        if let Some(fwd) = &mut self.forward {
            resolve(&mut fwd.source);
        }
        if let Some(rec) = &mut self.reconstruct {
            if let Some(file) = &mut rec.seed_file {
                resolve(file);
            }
        }
        if let Some(dir) = &mut self.device.dir {
            resolve(dir);
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.time.horizon > 0.0 && self.time.horizon.is_finite()) {
            return Err(config_err(format!(
                "[time] horizon must be positive, got {}",
                self.time.horizon
            )));
        }
        match (self.solver.cfl, self.solver.dt) {
            (Some(_), Some(_)) => {
                return Err(config_err("[solver] give either cfl or dt, not both"))
            }
            (None, None) => return Err(config_err("[solver] needs cfl or dt")),
            _ => {}
        }
        if let Some(cfl) = self.solver.cfl {
            if !(cfl > 0.0 && cfl <= 1.0) {
                return Err(config_err(format!(
                    "[solver] cfl = {cfl} lies outside the stable range (0, 1]"
                )));
            }
        }
        let schedule = &self.regularization.schedule;
        if schedule.is_empty() {
            return Err(config_err("[regularization] schedule must not be empty"));
        }
        if let Some(w) = schedule.windows(2).find(|w| w[1] >= w[0]) {
            return Err(config_err(format!(
                "[regularization] schedule must be strictly decreasing, got {} before {}",
                w[0], w[1]
            )));
        }
        if let Some(bad) = schedule.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(config_err(format!(
                "[regularization] schedule entries must be positive, got {bad}"
            )));
        }
        match self.device.backend.as_str() {
            "simulated" => {}
            "replay" => {
                if self.device.dir.is_none() {
                    return Err(config_err("[device] replay backend needs dir"));
                }
            }
            other => {
                return Err(config_err(format!(
                    "[device] backend must be \"simulated\" or \"replay\", got {other:?}"
                )))
            }
        }
        match self.oracle.backend.as_str() {
            "geometric" | "pde" | "both" => {}
            other => {
                return Err(config_err(format!(
                    "[oracle] backend must be \"geometric\", \"pde\", or \"both\", got {other:?}"
                )))
            }
        }
        if let Some(budget) = &self.budget {
            let given = budget.constant.is_some() as u8
                + budget.values.is_some() as u8
                + budget.file.is_some() as u8;
            if given != 1 {
                return Err(config_err(
                    "[budget] give exactly one of constant, values, file",
                ));
            }
        }
        for (section, file) in self.referenced_files() {
            if !Path::new(&file).exists() {
                return Err(config_err(format!(
                    "[{section}] references {file:?}, which does not exist"
                )));
            }
        }
        Ok(())
    }

    fn referenced_files(&self) -> Vec<(&'static str, String)> {
        let mut files = Vec::new();
        if let Some(f) = &self.speed.file {
            files.push(("speed", f.clone()));
        }
        if let Some(budget) = &self.budget {
            if let Some(f) = &budget.file {
                files.push(("budget", f.clone()));
            }
        }
        if let Some(fwd) = &self.forward {
            files.push(("forward", fwd.source.clone()));
        }
        if let Some(rec) = &self.reconstruct {
            if let Some(f) = &rec.seed_file {
                files.push(("reconstruct", f.clone()));
            }
        }
        if self.device.backend == "replay" {
            if let Some(d) = &self.device.dir {
                files.push(("device", d.clone()));
            }
        }
        files
    }

    /// Configuration echo embedded into every report.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.output.directory)
    }

    pub fn domain_spec(&self) -> Result<DomainSpec, CliError> {
        let d = &self.domain;
        let need = |value: Option<f64>, name: &str| {
            value.ok_or_else(|| {
                config_err(format!("[domain] {} shape needs {name}", self.domain.shape))
            })
        };
        let shape = match d.shape.as_str() {
            "interval" => Shape::Interval {
                length: need(d.length, "length")?,
            },
            "rectangle" => Shape::Rectangle {
                width: need(d.width, "width")?,
                height: need(d.height, "height")?,
            },
            "disk" => Shape::Disk {
                radius: need(d.radius, "radius")?,
            },
            other => {
                return Err(config_err(format!(
                    "[domain] shape must be \"interval\", \"rectangle\", or \"disk\", got {other:?}"
                )))
            }
        };
        Ok(DomainSpec::new(
            shape,
            d.interior_resolution,
            d.boundary_resolution,
        ))
    }

    pub fn build_grids(&self) -> Result<Arc<Grids>, CliError> {
        build_grids(&self.domain_spec()?).map_err(CliError::from)
    }

    pub fn build_speed(&self, grids: Arc<Grids>) -> Result<Arc<SpeedField>, CliError> {
        let s = &self.speed;
        let need = |value: Option<f64>, name: &str| {
            value.ok_or_else(|| {
                config_err(format!("[speed] {} profile needs {name}", self.speed.profile))
            })
        };
        let field = match s.profile.as_str() {
            "constant" => SpeedField::constant(grids, need(s.value, "value")?)?,
            "linear" => {
                let base = need(s.base, "base")?;
                let gradient = s
                    .gradient
                    .ok_or_else(|| config_err("[speed] linear profile needs gradient"))?;
                SpeedField::linear(grids, base, gradient)?
            }
            "sine" => {
                let base = need(s.base, "base")?;
                let amplitude = need(s.amplitude, "amplitude")?;
                SpeedField::from_fn(grids, move |p| {
                    base + amplitude * (std::f64::consts::PI * p[0]).sin()
                })?
            }
            "file" => {
                let file = s
                    .file
                    .as_ref()
                    .ok_or_else(|| config_err("[speed] file profile needs file"))?;
                let samples = read_speed_samples_csv(file, grids.interior.len())?;
                SpeedField::from_samples(grids, samples)?
            }
            other => {
                return Err(config_err(format!(
                    "[speed] profile must be \"constant\", \"linear\", \"sine\", or \"file\", \
                     got {other:?}"
                )))
            }
        };
        Ok(Arc::new(field))
    }

    pub fn build_settings(&self, speed: &SpeedField) -> Result<SolverSettings, CliError> {
        let two_t = 2.0 * self.time.horizon;
        if let Some(cfl) = self.solver.cfl {
            return SolverSettings::with_cfl(speed, two_t, cfl).map_err(CliError::from);
        }
        let dt = self.solver.dt.expect("validated: cfl or dt present");
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(config_err(format!("[solver] dt must be positive, got {dt}")));
        }
        let steps = (two_t / dt).round();
        if steps < 2.0 || (steps * dt - two_t).abs() > 1e-9 * two_t {
            return Err(config_err(format!(
                "[solver] dt = {dt} does not divide the measurement window {two_t}"
            )));
        }
        let steps = steps as usize;
        if steps % 2 != 0 {
            return Err(config_err(format!(
                "[solver] dt = {dt} gives {steps} steps; an even count is required so that \
                 t = T falls on the grid"
            )));
        }
        let time = TimeGrid::from_horizon(two_t, steps)?;
        SolverSettings::new(speed.grids().interior.h(), time).map_err(CliError::from)
    }

    pub fn build_device(
        &self,
        speed: &Arc<SpeedField>,
        settings: SolverSettings,
    ) -> Result<MeasurementDevice, CliError> {
        let mut device = match self.device.backend.as_str() {
            "replay" => {
                let dir = self.device.dir.as_ref().expect("validated: replay has dir");
                MeasurementDevice::replay(
                    dir,
                    settings.time(),
                    speed.grids().boundary.len(),
                )?
            }
            _ => MeasurementDevice::simulated(Arc::clone(speed), settings)?,
        };
        if let Some(noise) = &self.noise {
            if noise.level != 0.0 {
                device = device.with_noise(NoiseModel {
                    relative_level: noise.level,
                    seed: noise.seed,
                });
            }
        }
        if self.device.record {
            let dir = self
                .device
                .dir
                .as_ref()
                .ok_or_else(|| config_err("[device] record needs dir"))?;
            device = device.recording(dir);
        }
        Ok(device.with_verification(self.output.verification))
    }

    pub fn build_gamma(&self, n_boundary: usize) -> Result<BoundarySubset, CliError> {
        match &self.boundary.gamma {
            None => BoundarySubset::whole(n_boundary).map_err(CliError::from),
            Some(GammaSpec::Named(name)) if name == "whole" => {
                BoundarySubset::whole(n_boundary).map_err(CliError::from)
            }
            Some(GammaSpec::Named(other)) => Err(config_err(format!(
                "[boundary] gamma must be \"whole\" or a node list, got {other:?}"
            ))),
            Some(GammaSpec::Nodes(nodes)) => {
                BoundarySubset::from_indices(n_boundary, nodes.clone()).map_err(CliError::from)
            }
        }
    }

    pub fn build_budget(&self, n_boundary: usize) -> Result<BoundaryProfile, CliError> {
        let budget = self
            .budget
            .as_ref()
            .ok_or_else(|| config_err("this command needs a [budget] section"))?;
        if let Some(v) = budget.constant {
            return BoundaryProfile::from_values(vec![v; n_boundary]).map_err(CliError::from);
        }
        if let Some(values) = &budget.values {
            if values.len() != n_boundary {
                return Err(config_err(format!(
                    "[budget] values has {} entries, the boundary has {n_boundary} nodes",
                    values.len()
                )));
            }
            return BoundaryProfile::from_values(values.clone()).map_err(CliError::from);
        }
        let file = budget.file.as_ref().expect("validated: one budget source");
        read_boundary_profile_csv(file, n_boundary).map_err(CliError::from)
    }

    pub fn build_seeds(&self, n_boundary: usize) -> Result<Vec<BoundaryProfile>, CliError> {
        let rec = self
            .reconstruct
            .as_ref()
            .ok_or_else(|| config_err("this command needs a [reconstruct] section"))?;
        let mut seeds = Vec::new();
        if let Some(inline) = &rec.seeds {
            for (i, row) in inline.iter().enumerate() {
                if row.len() != n_boundary {
                    return Err(config_err(format!(
                        "[reconstruct] seed {i} has {} entries, the boundary has \
                         {n_boundary} nodes",
                        row.len()
                    )));
                }
                seeds.push(BoundaryProfile::from_values(row.clone())?);
            }
        }
        if let Some(file) = &rec.seed_file {
            seeds.extend(read_elements_csv(file, n_boundary)?);
        }
        if seeds.is_empty() {
            return Err(config_err(
                "[reconstruct] seed list is empty; give seeds or seed_file",
            ));
        }
        Ok(seeds)
    }

    pub fn ascent_options(&self) -> Result<AscentOptions, CliError> {
        let rec = self
            .reconstruct
            .as_ref()
            .ok_or_else(|| config_err("this command needs a [reconstruct] section"))?;
        Ok(AscentOptions {
            eps: rec.eps,
            margin_tol: rec.margin_tol,
            step_tol: rec.step_tol,
            bisections: rec.bisections,
            max_cycles: rec.max_cycles,
            node_order: None,
        })
    }
}
