use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use nbconc::bounds::{control_limit, tweedie_variance};
use serde::Serialize;

use crate::input;
use crate::output::{self, Format};

#[derive(Debug, Args)]
pub struct LimitArgs {
    /// Weekly `mu:kappa` pairs separated by commas, or `@FILE`.
    #[arg(
        long,
        conflicts_with = "scenario",
        required_unless_present = "scenario"
    )]
    nb2: Option<String>,
    /// Number of weeks the `--nb2` regions are observed for.
    #[arg(long, default_value_t = 1, conflicts_with = "scenario")]
    weeks: usize,
    /// Scenario file (TOML) with regions, weeks and alpha levels.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Alpha levels, comma separated. Defaults to the scenario's levels.
    #[arg(long, allow_negative_numbers = true, value_delimiter = ',')]
    alpha: Vec<f64>,
}

#[derive(Serialize)]
struct Level {
    alpha_level: f64,
    lambda: f64,
}

#[derive(Serialize)]
struct LimitReport {
    v_n: f64,
    limits: Vec<Level>,
}

#[derive(Serialize)]
struct Row {
    alpha_level: f64,
    lambda: f64,
    v_n: f64,
}

pub fn run(args: &LimitArgs, format: Format) -> Result<()> {
    let (v_n, default_levels) = match (&args.scenario, &args.nb2) {
        (Some(path), _) => {
            let s = input::scenario(path)?;
            (s.scenario.tweedie_variance(), s.alpha_levels)
        }
        (None, Some(arg)) => {
            if args.weeks == 0 {
                bail!("domain-error: weeks must be >= 1");
            }
            let weekly = tweedie_variance(&input::nb2_list(arg)?)?;
            (args.weeks as f64 * weekly, Vec::new())
        }
        (None, None) => unreachable!("clap requires --nb2 or --scenario"),
    };
    let levels = if args.alpha.is_empty() {
        default_levels
    } else {
        args.alpha.clone()
    };
    if levels.is_empty() {
        bail!("domain-error: no alpha levels given");
    }
    let limits = levels
        .iter()
        .map(|&a| {
            Ok(Level {
                alpha_level: a,
                lambda: control_limit(v_n, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let text = match format {
        Format::Object => output::object_string(&LimitReport { v_n, limits })?,
        Format::Delimited => {
            let rows: Vec<Row> = limits
                .iter()
                .map(|l| Row {
                    alpha_level: l.alpha_level,
                    lambda: l.lambda,
                    v_n,
                })
                .collect();
            output::delimited_string(&rows)?
        }
    };
    output::emit(&text)
}
