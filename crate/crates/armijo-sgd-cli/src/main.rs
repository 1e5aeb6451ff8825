//! Command-line front end for the experiment harness.
//!
//! Exit codes: 0 success, 2 solver failure, 3 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use armijo_sgd::harness::{compare, run_experiment, verify_trace, ExperimentConfig};
use armijo_sgd::Error;

#[derive(Parser)]
#[command(name = "armijo-sgd", about = "Armijo-type stochastic gradient benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (solver, seed) cell of a JSON experiment config.
    Run {
        /// Path to the experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for traces, summary and plots.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed list, e.g. --seeds 1,2,3.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Worker threads for run execution.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Aggregate a finished run directory into epoch-axis comparison curves.
    Compare {
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a stored trace from its sibling summary.json and check that
    /// every row (and so every accepted line-search step) reproduces.
    Verify {
        #[arg(long)]
        trace: PathBuf,
    },
}

const EXIT_SOLVER_FAILURE: u8 = 2;
const EXIT_CONFIG_ERROR: u8 = 3;

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG_ERROR,
        _ => EXIT_SOLVER_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            seeds,
            parallel,
        } => {
            let mut config = ExperimentConfig::from_file(&config)?;
            if let Some(seeds) = seeds {
                config.seeds = seeds;
                config.validate()?;
            }
            let summary = run_experiment(&config, &out, parallel)?;
            let failed = summary.failed_runs();
            let total = summary.runs.len();
            println!("{} of {total} runs succeeded; outputs in {}", total - failed, out.display());
            for run in summary.runs.iter().filter(|r| r.error.is_some()) {
                eprintln!("run {} failed: {}", run.label, run.error.as_deref().unwrap_or(""));
            }
            if failed > 0 {
                Ok(ExitCode::from(EXIT_SOLVER_FAILURE))
            } else {
                Ok(ExitCode::SUCCESS)
            }
        }
        Command::Compare { out } => {
            let report = compare(&out)?;
            println!(
                "aggregated {} solver curves over {} epochs; outputs in {}",
                report.curves.len(),
                report.epochs.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { trace } => {
            verify_trace(&trace)?;
            println!("trace verified: {}", trace.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
