use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use nbconc::surveillance::MonitoringState;
use serde::Serialize;

use crate::input;
use crate::output::{self, Format};

#[derive(Debug, Args)]
pub struct MonitorArgs {
    /// Scenario file (TOML) giving fitted weekly means per region.
    #[arg(long)]
    scenario: PathBuf,
    /// Weekly counts (CSV, header row of region names, one row per week).
    #[arg(long)]
    counts: PathBuf,
    /// Alpha level of the control limit. Defaults to the scenario's first
    /// level, or 0.05.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    /// Write the history here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Row {
    period: usize,
    #[serde(rename = "S_t")]
    s_t: f64,
    lambda_alpha: f64,
    alarm: bool,
}

#[derive(Serialize)]
struct History<'a> {
    alpha_level: f64,
    control_limit: f64,
    any_alarm: bool,
    history: &'a [Row],
}

/// Returns whether any week raised an alarm.
pub fn run(args: &MonitorArgs, format: Format) -> Result<bool> {
    let loaded = input::scenario(&args.scenario)?;
    let alpha = args
        .alpha
        .or_else(|| loaded.alpha_levels.first().copied())
        .unwrap_or(0.05);
    let rows = input::counts(&args.counts, &loaded.scenario)?;
    let state = MonitoringState::for_scenario(&loaded.scenario, alpha)?
        .replay(&rows, &loaded.scenario.weekly_means())?;

    let history: Vec<Row> = state
        .history()
        .iter()
        .map(|h| Row {
            period: h.period,
            s_t: h.cumulative_deviation,
            lambda_alpha: h.control_limit,
            alarm: h.alarm,
        })
        .collect();
    let text = match format {
        Format::Delimited => output::delimited_string(&history)?,
        Format::Object => output::object_string(&History {
            alpha_level: alpha,
            control_limit: state.control_limit(),
            any_alarm: state.any_alarm(),
            history: &history,
        })?,
    };
    match &args.out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => output::emit(&text)?,
    }
    Ok(state.any_alarm())
}
