//! Command-line surface for spectral backtests of forecast distributions.
//!
//! Subcommands: `backtest` runs the configured tests on CSV files of daily
//! PIT records; `simulate` runs Monte Carlo size/power grids; `clean`
//! screens a file for spurious PIT values; `kernels` prints kernel moments.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{BacktestArgs, CleanArgs, KernelsArgs, OutputFormat, SimulateArgs};
use specbt_core::error::Error as CoreError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "specbt", version, about = "Spectral backtests of forecast distributions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run backtests on CSV files of daily PIT records.
    Backtest {
        /// Input CSV file(s); one portfolio per file.
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        /// JSON configuration (test list, windows, CVTs).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        /// csv, json or both.
        #[arg(long, default_value = "both")]
        format: String,
        /// Rejection level recorded in the report.
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Spurious-PIT screening tolerance; 0 disables screening.
        #[arg(long, default_value_t = 1e-5)]
        q: f64,
    },
    /// Run a Monte Carlo size/power study.
    Simulate {
        /// JSON configuration with dgps and tests.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset grid: 2, 4, S1, S2, S3, S4 or S5.
        #[arg(long)]
        paper_table: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Sample length override.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        level: f64,
        /// Worker threads (default: all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
        #[arg(long, default_value = "both")]
        format: String,
    },
    /// Screen a CSV file for spurious PIT values and write a cleaned copy.
    Clean {
        #[arg(long)]
        input: PathBuf,
        /// Screening tolerance; 0 disables flagging.
        #[arg(long, default_value_t = 1e-5)]
        q: f64,
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
    /// Print kernel moments and G samples.
    Kernels {
        /// JSON configuration with a kernels list.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory for G samples and moment files.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Backtest { input, config, output_dir, format, level, q } => {
            commands::cmd_backtest(&BacktestArgs {
                inputs: input,
                config,
                output_dir,
                format: format.parse::<OutputFormat>()?,
                level,
                q,
            })
        }
        Command::Simulate {
            config,
            paper_table,
            reps,
            seed,
            n,
            level,
            workers,
            output_dir,
            format,
        } => commands::cmd_simulate(&SimulateArgs {
            config,
            paper_table,
            reps,
            seed,
            n,
            level,
            workers,
            output_dir,
            format: format.parse::<OutputFormat>()?,
        }),
        Command::Clean { input, q, output_dir } => {
            commands::cmd_clean(&CleanArgs { input, q, output_dir })
        }
        Command::Kernels { config, output_dir } => {
            commands::cmd_kernels(&KernelsArgs { config, output_dir })
        }
    }
}

/// Maps core error kinds onto exit codes: data problems exit 3, numerical
/// failures exit 4, anything else (bad flags, bad config) exits 2.
fn classify(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<CoreError>() {
        match core {
            CoreError::Parse { .. }
            | CoreError::Schema(_)
            | CoreError::Io(_)
            | CoreError::MissingFields(_)
            | CoreError::InsufficientData { .. } => 3,
            CoreError::Convergence { .. }
            | CoreError::OptimizationFailure(_)
            | CoreError::SingularCovariance(_)
            | CoreError::SingularH(_)
            | CoreError::DivergentMoment(_)
            | CoreError::WindowTooLow { .. }
            | CoreError::UnsupportedCombination(_)
            | CoreError::FitFailure(_) => 4,
            CoreError::Domain { .. } => 2,
        }
    } else if err.downcast_ref::<std::io::Error>().is_some() {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(classify(&err))
        }
    }
}
