mod bench;
mod config;
mod error;
mod estimate;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, Overrides};
use error::CliError;

/// Command-line front end for ICE g-computation.
#[derive(Parser)]
#[command(
    name = "gcomp",
    version,
    about = "ICE g-computation with sandwich variance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Simulation iterations, or bootstrap resamples for `bench`.
    #[arg(long, global = true)]
    iterations: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Run the simulation grid and report bias, ESE, ASE, SER and coverage.
    Simulate,
    /// Estimate a plan mean (and optionally a contrast) on one dataset.
    Estimate,
    /// Compare sandwich and bootstrap standard errors and their run times.
    Bench,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (file, base) = config::load(cli.config.as_deref())?;
    let flags = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        format: cli.format,
        out: cli.out,
        iterations: cli.iterations,
    };
    match cli.command {
        Command::Simulate => {
            let common = config::resolve_common(&file, &flags, config::available_cores())?;
            let sim = config::resolve_simulate(&file, &flags)?;
            simulate::run(&common, &sim)
        }
        Command::Estimate => {
            let common = config::resolve_common(&file, &flags, 1)?;
            let section = config::resolve_estimate(&file, &base)?;
            estimate::run(&common, &section)
        }
        Command::Bench => {
            let common = config::resolve_common(&file, &flags, config::available_cores())?;
            let section = config::resolve_estimate(&file, &base)?;
            let bench = config::resolve_bench(&file, &flags)?;
            bench::run(&common, &section, &bench)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
