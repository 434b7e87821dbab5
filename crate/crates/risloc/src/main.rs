//! Thin CLI over the experiment driver: `run` executes a seeded Monte
//! Carlo sweep, `crb` evaluates the bounds only; both write CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use risloc::experiment::{
    crb_csv, experiment_csv, run_crb_table, run_experiment, write_csv, ExperimentConfig,
};

#[derive(Parser)]
#[command(name = "risloc", about = "RIS-aided mmWave positioning experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a seeded Monte Carlo sweep and write the result table.
    Run {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Master RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Trials per sweep point (overrides the config).
        #[arg(long)]
        trials: Option<usize>,
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
        /// Simulate this many explicit uplink pilot slots instead of the
        /// averaged observation model (small-T sanity runs).
        #[arg(long)]
        raw_slots: Option<usize>,
    },
    /// Evaluate the position and per-parameter bounds across the sweep.
    Crb {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> risloc::Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, trials, output, raw_slots } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.experiment.seed = s;
            }
            if let Some(t) = trials {
                cfg.experiment.trials = t;
            }
            if raw_slots.is_some() {
                cfg.experiment.raw_slots = raw_slots;
            }
            let rows = run_experiment(&cfg)?;
            let csv = experiment_csv(&rows, cfg.scenario.ris_positions.len());
            let path = write_csv(&output, &csv)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
        Command::Crb { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_crb_table(&cfg)?;
            let csv = crb_csv(&rows, cfg.scenario.ris_positions.len());
            let path = write_csv(&output, &csv)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
        }
    }
    Ok(())
}
