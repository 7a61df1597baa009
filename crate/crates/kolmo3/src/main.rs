//! Thin batch entry point; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kolmo3::cli::{self, CliOverrides, ExperimentConfig, ExperimentKind};
use kolmo3::error::Error;

#[derive(Parser)]
#[command(
    name = "kolmo3",
    version,
    about = "Batch laboratory for a three-species cubic interaction system with proportional noise",
    long_about = "Runs one experiment per invocation and writes CSV artifacts plus a manifest \
                  (claim, config hash, per-file checksums) into the output directory. \
                  Configuration is a flat `key = value` file; flags override it. \
                  Reruns of the same configuration are byte-identical."
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Replace the seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for artifacts (default "out").
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for ensemble commands; results do not depend on this.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium census, eigenvalues, and regime case for the drift.
    Classify,
    /// Noise-free trajectory with conserved-quantity diagnostics.
    Flow,
    /// One strong-scheme trajectory of the noisy system.
    Sde,
    /// Scheme error against the exact radial-factor decomposition.
    DecomposeCheck,
    /// Closed-form stationary radial density on a grid.
    LogisticDensity,
    /// Growth rates of the linearized flow at one base.
    Lyapunov,
    /// Growth-rate table across noise levels.
    LyapunovSweep,
    /// Pullback limit of a fixed noise realization.
    Pullback,
    /// Random periodic solution and its random period.
    Crps,
    /// Long-run occupation measure on an invariant cone.
    ConeOccupation,
    /// Concentration of stationary objects as the noise vanishes.
    VanishingNoise,
    /// Shape change of the stationary radial density.
    PBifurcation,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Classify => ExperimentKind::Classify,
            Command::Flow => ExperimentKind::Flow,
            Command::Sde => ExperimentKind::Sde,
            Command::DecomposeCheck => ExperimentKind::DecomposeCheck,
            Command::LogisticDensity => ExperimentKind::LogisticDensity,
            Command::Lyapunov => ExperimentKind::Lyapunov,
            Command::LyapunovSweep => ExperimentKind::LyapunovSweep,
            Command::Pullback => ExperimentKind::Pullback,
            Command::Crps => ExperimentKind::Crps,
            Command::ConeOccupation => ExperimentKind::ConeOccupation,
            Command::VanishingNoise => ExperimentKind::VanishingNoise,
            Command::PBifurcation => ExperimentKind::PBifurcation,
        }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let overrides = CliOverrides { seed: args.seed, out: args.out, threads: args.threads };

    let result = read_config(args.config.as_deref())
        .and_then(|text| {
            ExperimentConfig::from_sources(args.command.kind(), text.as_deref(), &overrides)
        })
        .and_then(cli::run);

    match result {
        Ok(manifest) => {
            println!(
                "wrote {} artifact(s) and manifest.json; config hash {}",
                manifest.files.len(),
                manifest.config_hash
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn read_config(path: Option<&std::path::Path>) -> Result<Option<String>, Error> {
    match path {
        None => Ok(None),
        Some(p) => std::fs::read_to_string(p).map(Some).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", p.display()))
        }),
    }
}
