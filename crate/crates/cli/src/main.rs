//! `regulab` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 violated
//! hypothesis (e.g. non-resonance, stabilizability).

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(name = "regulab", version, about = "Internal-model regulator synthesis and robustness experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalOpts {
    /// Output directory for report.json and CSV files
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides the scenario's)
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Simulation horizon (overrides the scenario's)
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    #[arg(long, global = true)]
    pub tail_fraction: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the Linear Regulator for a scenario and print it
    Synth { scenario: PathBuf },
    /// Run the nominal closed loop and write trajectories and the error spectrum
    Simulate { scenario: PathBuf },
    /// Run a seeded perturbation sweep
    Sweep {
        scenario: PathBuf,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Run the trigonometric-perturbation counterexample
    Counterexample {
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long = "N", default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Print the composed closed-loop equations
    PrintSystem { scenario: PathBuf },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("violated hypothesis: {condition}: {message}")]
    Hypothesis { condition: &'static str, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Hypothesis { .. } => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
