use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wavecontrol_cli::config::Overrides;
use wavecontrol_cli::{run, Command, Invocation};

/// Experiment runner for the boundary-control toolkit.
#[derive(Parser)]
#[command(name = "wavecontrol", version, about)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory, overriding the configuration.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for independent oracle evaluations and seed ascents.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    jobs: usize,

    /// Seed for generated sources, overriding the configured noise seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Force the verification channel on or off.
    #[arg(long, global = true, value_name = "on|off", value_parser = ["on", "off"])]
    verification: Option<String>,

    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Drive a source file through the measurement map.
    Forward,
    /// Estimate an influence volume from boundary data.
    Volume,
    /// Recover maximal elements of the volume semilattice.
    Reconstruct,
    /// Run the cross-module invariant suite.
    Verify,
    /// Check the boundary-data inner-product identity only.
    BlagoCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config_path) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let invocation = Invocation {
        command: match cli.command {
            CliCommand::Forward => Command::Forward,
            CliCommand::Volume => Command::Volume,
            CliCommand::Reconstruct => Command::Reconstruct,
            CliCommand::Verify => Command::Verify,
            CliCommand::BlagoCheck => Command::BlagoCheck,
        },
        config_path,
        overrides: Overrides {
            out_dir: cli.out,
            seed: cli.seed,
            verification: cli.verification.as_deref().map(|v| v == "on"),
        },
        jobs: cli.jobs,
        seed: cli.seed,
    };
    match run(&invocation) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
