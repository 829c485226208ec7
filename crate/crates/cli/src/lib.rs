//! Config-driven experiment runner for the boundary-control toolkit.
//!
//! A sectioned TOML file describes the domain, sound speed, measurement
//! window, solver, and per-command settings; the five commands drive the
//! core crate's pipelines and leave machine-readable reports, CSV plot data,
//! and a separate timing file in the output directory.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on
//! configuration errors.

pub mod commands;
pub mod config;
pub mod report;
pub mod sources;

use std::fmt;
use std::path::PathBuf;

use config::{ExperimentConfig, Overrides};

/// Errors surfaced to the terminal, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, missing files, or any failure preparing or
    /// writing experiment data (exit code 2).
    Config(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<wavecontrol::Error> for CliError {
    fn from(e: wavecontrol::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Runtime knobs that are not part of the configuration file.
#[derive(Debug, Clone)]
pub struct RunContext {
    /// Worker threads for independent oracle evaluations and seed ascents.
    pub jobs: usize,
    /// Seed for generated verification sources.
    pub seed: u64,
}

/// Which command to run, mirrored from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Forward,
    Volume,
    Reconstruct,
    Verify,
    BlagoCheck,
}

/// Resolved invocation: configuration file plus overrides.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config_path: PathBuf,
    pub overrides: Overrides,
    pub jobs: usize,
    pub seed: Option<u64>,
}

/// Load the configuration and run the command; `Ok(false)` means a
/// verification check failed.
pub fn run(invocation: &Invocation) -> Result<bool, CliError> {
    let cfg = ExperimentConfig::load(&invocation.config_path, &invocation.overrides)?;
    let ctx = RunContext {
        jobs: invocation.jobs.max(1),
        seed: invocation
            .seed
            .or(cfg.noise.as_ref().map(|n| n.seed))
            .unwrap_or(0),
    };
    match invocation.command {
        Command::Forward => commands::cmd_forward(&cfg, &ctx),
        Command::Volume => commands::cmd_volume(&cfg, &ctx),
        Command::Reconstruct => commands::cmd_reconstruct(&cfg, &ctx),
        Command::Verify => commands::cmd_verify(&cfg, &ctx),
        Command::BlagoCheck => commands::cmd_blago_check(&cfg, &ctx),
    }
}
