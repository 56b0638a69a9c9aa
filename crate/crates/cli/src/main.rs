#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Degenerate(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Input(_) | CliError::Io(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Infeasible(_) => 4,
        }
    }
}

impl From<wmopt_core::Error> for CliError {
    fn from(e: wmopt_core::Error) -> Self {
        match e {
            wmopt_core::Error::Degenerate(_) => CliError::Degenerate(e.to_string()),
            wmopt_core::Error::Precondition(_) => CliError::Infeasible(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "wmopt", version, about = "Postselected weak-measurement simulation and output optimization")]
pub struct Cli {
    /// JSON file overriding numerical tolerances.
    #[arg(long, global = true)]
    tolerance_file: Option<PathBuf>,
    /// Master seed for randomized suites.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "WMOPT_THREADS")]
    threads: Option<usize>,
    /// Pretty-print JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extremal conditional outputs, their weak values and the trade-off bound.
    Optimize {
        setup: Option<PathBuf>,
        /// Detector moments a,c,s instead of a setup file.
        #[arg(long, value_name = "A,C,S", conflicts_with = "setup")]
        moments: Option<String>,
        #[arg(long)]
        json: Option<PathBuf>,
        /// Output along the boundary of the admissible region, for plotting.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exact and approximate conditional outputs over a coupling grid (CSV).
    Simulate {
        setup: PathBuf,
        #[arg(long, value_name = "LO:HI:N")]
        lambda_grid: Option<String>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the verification suites; exit 1 if any fails.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Samples per suite (defaults differ per suite).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Build a detector state whose sandwich average is as large as requested.
    Amplify {
        setup: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        target_s: Option<f64>,
        /// Readout average required of the constructed state.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        target_o_avg: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Cauchy,
    Bounds,
    Optima,
    Coupling,
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wmopt: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
