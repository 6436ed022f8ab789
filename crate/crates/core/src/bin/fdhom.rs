//! Command-line runner for the homogenisation experiments.
//!
//! All subcommands share the TOML config loader; the subcommand selects the
//! experiment. Output directory precedence: --out, then FDHOM_OUT, then the
//! config's [output] dir, then ./out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fdhom::config::{ExperimentConfig, ExperimentKind};
use fdhom::experiments;

#[derive(Parser)]
#[command(name = "fdhom", version, about = "free-discontinuity homogenisation engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Path to the experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-pool size (0 = machine parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Replace the config's seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sampled admissibility checks and print the report.
    Check,
    /// Solve a single cell problem from the [cell] section.
    CellSolve,
    /// Tabulate the effective densities along the growing-domain schedule.
    Homogenize,
    /// Stochastic ensemble study: subadditive process + ergodic estimator.
    Stochastic,
    /// Convergence of minima with an L1 fidelity term.
    Gamma,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Check => ExperimentKind::Check,
            Command::CellSolve => ExperimentKind::CellSolve,
            Command::Homogenize => ExperimentKind::Homogenize,
            Command::Stochastic => ExperimentKind::Stochastic,
            Command::Gamma => ExperimentKind::Gamma,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config_path = match &cli.config {
        Some(p) => p.clone(),
        None => {
            eprintln!("error: --config PATH is required");
            return ExitCode::from(2);
        }
    };
    let raw = match std::fs::read_to_string(&config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return ExitCode::from(2);
        }
    };
    let config = match ExperimentConfig::from_toml(&raw) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.workers > 0 {
        // Ignore the error if a pool already exists (tests, repeated init).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.workers)
            .build_global();
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("FDHOM_OUT").map(PathBuf::from))
        .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    match experiments::run(
        cli.command.kind(),
        &config,
        &raw,
        &out_dir,
        cli.seed_override,
    ) {
        Ok(artifacts) => {
            for f in &artifacts.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e @ fdhom::Error::Config { .. }) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
