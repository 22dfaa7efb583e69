//! `nbconc`: concentration bounds, control limits, reproduction runs and
//! cumulative-deviation monitoring for Negative Binomial counts.
//!
//! Exit status: 0 success (no alarm), 1 domain or I/O error, 2 usage error,
//! 3 monitoring alarm.

mod bound;
mod input;
mod limit;
mod monitor;
mod output;
mod reproduce;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use output::Format;

#[derive(Debug, Parser)]
#[command(name = "nbconc", version, about)]
struct Cli {
    /// Output format: one JSON object, or CSV rows with a header.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate or invert a tail bound.
    Bound(bound::BoundArgs),
    /// Tweedie variance and control limits for NB2 regions.
    Limit(limit::LimitArgs),
    /// Rerun the reference experiments and write tables and figure data.
    Reproduce(reproduce::ReproduceArgs),
    /// Replay weekly counts through the cumulative-deviation monitor.
    Monitor(monitor::MonitorArgs),
}

const ALARM: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let object = cli.format.unwrap_or(Format::Object);
    let result = match &cli.command {
        Command::Bound(a) => bound::run(a, object).map(|()| false),
        Command::Limit(a) => limit::run(a, object).map(|()| false),
        Command::Reproduce(a) => reproduce::run(a, object).map(|()| false),
        Command::Monitor(a) => monitor::run(a, cli.format.unwrap_or(Format::Delimited)),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(ALARM),
        Err(e) => {
            eprintln!("nbconc: {e:#}");
            ExitCode::FAILURE
        }
    }
}
