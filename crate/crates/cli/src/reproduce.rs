use std::collections::hash_map::RandomState;
use std::fs;
use std::hash::BuildHasher;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use nbconc::reproduce::{self, EpiReport, ReproductionReport, ReproductionSettings, Which};
use serde::Serialize;

use crate::output::{self, Format};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Table2,
    Epi,
    Figures,
    All,
}

impl From<Target> for Which {
    fn from(t: Target) -> Self {
        match t {
            Target::Table2 => Which::Table2,
            Target::Epi => Which::Epi,
            Target::Figures => Which::Figures,
            Target::All => Which::All,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    which: Target,
    /// Master seed.
    #[arg(long, default_value_t = reproduce::DEFAULT_SEED, conflicts_with = "fresh")]
    seed: u64,
    /// Draw a fresh master seed (recorded in the report).
    #[arg(long)]
    fresh: bool,
    /// Override every replication count.
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory.
    #[arg(long, env = "NBCONC_OUT_DIR", default_value = "reproduction")]
    out: PathBuf,
}

#[derive(Serialize)]
struct EpiRow {
    v_n: f64,
    total_expected: f64,
    lambda_05: f64,
    lambda_01: f64,
    reported_mode: &'static str,
    p95: f64,
    efficiency: f64,
    exceedance_rate: f64,
    outbreak_alarm_rate: f64,
}

impl From<&EpiReport> for EpiRow {
    fn from(e: &EpiReport) -> Self {
        Self {
            v_n: e.v_n,
            total_expected: e.total_expected,
            lambda_05: e.lambda_05,
            lambda_01: e.lambda_01,
            reported_mode: e.reported_mode.name(),
            p95: e.p95,
            efficiency: e.efficiency,
            exceedance_rate: e.exceedance_rate,
            outbreak_alarm_rate: e.outbreak_alarm_rate,
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_all(dir: &Path, report: &ReproductionReport) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write(dir, "report.json", &output::object_string(report)?)?;
    if let Some(t) = &report.table2 {
        write(dir, "table2.csv", &output::delimited_string(&t.rows)?)?;
    }
    if let Some(e) = &report.epi {
        write(
            dir,
            "epi.csv",
            &output::delimited_string(&[EpiRow::from(e)])?,
        )?;
    }
    for (id, series) in &report.figure_series {
        write(dir, &format!("{id}.csv"), &series.to_csv())?;
    }
    Ok(())
}

pub fn run(args: &ReproduceArgs, format: Format) -> Result<()> {
    let defaults = ReproductionSettings::default();
    let seed = if args.fresh {
        RandomState::new().hash_one(std::time::SystemTime::now())
    } else {
        args.seed
    };
    let settings = ReproductionSettings {
        seed,
        table2_replications: args.reps.unwrap_or(defaults.table2_replications),
        epi_replications: args.reps.unwrap_or(defaults.epi_replications),
        outbreak_replications: args.reps.unwrap_or(defaults.outbreak_replications),
        workers: args.workers,
    };
    let report = reproduce::reproduce(args.which.into(), &settings)?;
    write_all(&args.out, &report)?;

    let text = match format {
        Format::Object => output::object_string(&report)?,
        Format::Delimited => match (&report.table2, &report.epi) {
            (Some(t), _) => output::delimited_string(&t.rows)?,
            (None, Some(e)) => output::delimited_string(&[EpiRow::from(e)])?,
            (None, None) => String::new(),
        },
    };
    output::emit(&text)
}
