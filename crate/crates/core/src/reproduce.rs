//! End-to-end reproduction runs: the moment-matched comparison table, the
//! surveillance validation, and the data series behind each figure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::bounds::MaximalBound;
use crate::distributions::NBParams;
use crate::error::Result;
use crate::simulation::{
    amplification_check, efficiency_curve, lambda_correlation, run_dependent_experiment,
    run_independent_experiment, AmplificationCheck, DeviationSample, ExperimentConfig,
    MomentMatchedDesign, SimulationSummary,
};
use crate::surveillance::{
    epi_control_limits, outbreak_alarm_rate, run_epi_validation, EpiScenario, MaxOrdering,
    OutbreakShift,
};

pub const DEFAULT_SEED: u64 = 42;
pub const TABLE2_REPLICATIONS: usize = 2_000;
pub const EPI_REPLICATIONS: usize = 5_000;
pub const OUTBREAK_REPLICATIONS: usize = 1_000;

/// Published surveillance validation figures the epi run is compared with.
pub const REFERENCE_EPI_P95: f64 = 3_018.0;
pub const REFERENCE_EPI_EFFICIENCY: f64 = 0.47;
pub const EPI_P95_REL_TOL: f64 = 0.05;
pub const EPI_EFFICIENCY_ABS_TOL: f64 = 0.03;

/// Dispersion grid of the efficiency-vs-kappa series.
pub const EFFICIENCY_KAPPA_GRID: [f64; 10] = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0];
pub const EFFICIENCY_BASE_MU: f64 = 5.0;
pub const EFFICIENCY_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Table2,
    Epi,
    Figures,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReproductionSettings {
    pub seed: u64,
    pub table2_replications: usize,
    pub epi_replications: usize,
    pub outbreak_replications: usize,
    pub workers: usize,
}

impl Default for ReproductionSettings {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            table2_replications: TABLE2_REPLICATIONS,
            epi_replications: EPI_REPLICATIONS,
            outbreak_replications: OUTBREAK_REPLICATIONS,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Row {
    pub statistic: &'static str,
    pub independent: f64,
    pub dependent: f64,
    pub percent_change: f64,
}

impl Table2Row {
    fn new(statistic: &'static str, independent: f64, dependent: f64) -> Self {
        Self {
            statistic,
            independent,
            dependent,
            percent_change: 100.0 * (dependent / independent - 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentMatchReport {
    pub independent_mean_total: f64,
    pub independent_variance_total: f64,
    pub dependent_variance_total: f64,
    pub aggregate_variance_gap: f64,
    pub max_component_variance_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table2Report {
    pub rows: Vec<Table2Row>,
    pub independent: SimulationSummary,
    pub dependent: SimulationSummary,
    pub lambda_correlation: f64,
    pub amplification: AmplificationCheck,
    pub moment_match: MomentMatchReport,
}

/// Table report plus the raw samples the figures are drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2Run {
    pub report: Table2Report,
    pub independent_samples: Vec<DeviationSample>,
    pub dependent_samples: Vec<DeviationSample>,
}

pub fn run_table2(settings: &ReproductionSettings) -> Result<Table2Run> {
    let design = MomentMatchedDesign::reference();
    let cfg = ExperimentConfig::new(settings.table2_replications, 0.05, settings.seed)
        .with_workers(settings.workers);
    let (indep, indep_samples) = run_independent_experiment(&design.independent, &cfg)?;
    let (dep, dep_samples) = run_dependent_experiment(&design.mixture, &cfg)?;
    let rows = vec![
        Table2Row::new("mean_deviation", indep.mean, dep.mean),
        Table2Row::new("median_deviation", indep.median, dep.median),
        Table2Row::new("standard_deviation", indep.sd, dep.sd),
        Table2Row::new("p95", indep.p95, dep.p95),
        Table2Row::new("p99", indep.p99, dep.p99),
        Table2Row::new(
            "theoretical_bound",
            indep.theoretical_lambda,
            dep.theoretical_lambda,
        ),
        Table2Row::new("bound_efficiency", indep.efficiency, dep.efficiency),
    ];
    let amplification = if settings.table2_replications >= 100 {
        amplification_check(
            &design,
            settings.table2_replications,
            settings.seed,
            settings.workers,
        )?
    } else {
        AmplificationCheck {
            indep_mean: indep.mean,
            dep_mean: dep.mean,
            ratio: dep.mean / indep.mean,
            amplified: dep.mean > indep.mean,
        }
    };
    let report = Table2Report {
        rows,
        independent: indep,
        dependent: dep,
        lambda_correlation: lambda_correlation(&dep_samples)?,
        amplification,
        moment_match: MomentMatchReport {
            independent_mean_total: design.independent_mean_total(),
            independent_variance_total: design.independent_variance_total(),
            dependent_variance_total: design.dependent_variance_total(),
            aggregate_variance_gap: design.aggregate_variance_gap(),
            max_component_variance_gap: design.max_component_variance_gap(),
        },
    };
    Ok(Table2Run {
        report,
        independent_samples: indep_samples,
        dependent_samples: dep_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpiModeResult {
    pub mode: MaxOrdering,
    pub summary: SimulationSummary,
    pub matches_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpiReport {
    pub v_n: f64,
    pub total_expected: f64,
    pub lambda_05: f64,
    pub lambda_01: f64,
    /// Mode whose p95 and efficiency are reported below.
    pub reported_mode: MaxOrdering,
    pub p95: f64,
    pub efficiency: f64,
    pub exceedance_rate: f64,
    pub matching_modes: Vec<MaxOrdering>,
    pub modes: Vec<EpiModeResult>,
    pub outbreak: OutbreakShift,
    pub outbreak_alarm_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpiRun {
    pub report: EpiReport,
    pub reported_maxima: Vec<f64>,
}

fn matches_reference(s: &SimulationSummary) -> bool {
    (s.p95 / REFERENCE_EPI_P95 - 1.0).abs() <= EPI_P95_REL_TOL
        && (s.efficiency - REFERENCE_EPI_EFFICIENCY).abs() <= EPI_EFFICIENCY_ABS_TOL
}

/// Runs the surveillance validation in both max orderings. Region-prefix
/// is reported when it matches the reference figures, time-prefix
/// otherwise.
pub fn run_epi(settings: &ReproductionSettings) -> Result<EpiRun> {
    let scenario = EpiScenario::reference();
    let limits = epi_control_limits(&scenario, &[0.05, 0.01])?;
    let cfg = ExperimentConfig::new(settings.epi_replications, 0.05, settings.seed)
        .with_workers(settings.workers);

    let mut modes = Vec::new();
    let mut maxima = Vec::new();
    for mode in MaxOrdering::ALL {
        let (summary, values) = run_epi_validation(&scenario, &cfg, mode)?;
        modes.push(EpiModeResult {
            mode,
            summary,
            matches_reference: matches_reference(&summary),
        });
        maxima.push(values);
    }
    let reported = if modes[0].matches_reference { 0 } else { 1 };

    let outbreak = OutbreakShift {
        region: 3,
        factor: 1.5,
        from_week: 6,
    };
    let outbreak_cfg = ExperimentConfig::new(settings.outbreak_replications, 0.05, settings.seed)
        .with_workers(settings.workers);
    let rate = outbreak_alarm_rate(&scenario, outbreak, &outbreak_cfg)?;

    let chosen = modes[reported].summary;
    let report = EpiReport {
        v_n: scenario.tweedie_variance(),
        total_expected: scenario.total_expected(),
        lambda_05: limits[0].lambda,
        lambda_01: limits[1].lambda,
        reported_mode: modes[reported].mode,
        p95: chosen.p95,
        efficiency: chosen.efficiency,
        exceedance_rate: chosen.exceedance_rate,
        matching_modes: modes
            .iter()
            .filter(|m| m.matches_reference)
            .map(|m| m.mode)
            .collect(),
        modes,
        outbreak,
        outbreak_alarm_rate: rate,
    };
    Ok(EpiRun {
        report,
        reported_maxima: maxima.swap_remove(reported),
    })
}

/// Columnar numeric data behind one figure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureSeries {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureSeries {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Comma-delimited text with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }
}

fn histogram(series: &[&[f64]], width: f64) -> Vec<(f64, Vec<usize>)> {
    let top = series
        .iter()
        .flat_map(|s| s.iter())
        .copied()
        .fold(0.0, f64::max);
    let bins = (top / width).floor() as usize + 1;
    let mut counts = vec![vec![0usize; series.len()]; bins];
    for (j, s) in series.iter().enumerate() {
        for &v in s.iter() {
            counts[(v / width).floor() as usize][j] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 * width, c))
        .collect()
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Mean-variance curves at fixed `p` (variance `mu + mu^2 / r`), and the
/// overdispersion index `1 + mu / r` against `r` at fixed means.
fn nb_curves() -> (FigureSeries, FigureSeries) {
    let mut meanvar = FigureSeries::new(&["p", "r", "mean", "variance"]);
    for p in [0.3, 0.5, 0.7] {
        for i in 1..=100 {
            let r = 0.5 * i as f64;
            let nb = NBParams::new(r, p).expect("valid grid point");
            meanvar.push(vec![p, r, nb.mean(), nb.variance()]);
        }
    }
    let mut overdisp = FigureSeries::new(&["mean", "r", "p", "overdispersion_index"]);
    for mu in [2.0, 5.0, 10.0] {
        for i in 1..=100 {
            let r = 0.5 * i as f64;
            let nb = NBParams::new(r, r / (r + mu)).expect("valid grid point");
            overdisp.push(vec![mu, r, nb.p(), nb.overdispersion_index()]);
        }
    }
    (meanvar, overdisp)
}

/// Builds every figure series from completed runs.
pub fn figure_series(
    table2: &Table2Run,
    epi: &EpiRun,
    settings: &ReproductionSettings,
) -> Result<BTreeMap<String, FigureSeries>> {
    let mut out = BTreeMap::new();
    let (fig1, fig2) = nb_curves();
    out.insert("fig1_mean_variance".to_string(), fig1);
    out.insert("fig2_overdispersion".to_string(), fig2);

    let mut fig3 = FigureSeries::new(&["replication", "max_abs_dev", "control_limit"]);
    let limit = table2.report.independent.theoretical_lambda;
    for (i, s) in table2.independent_samples.iter().enumerate() {
        fig3.push(vec![(i + 1) as f64, s.max_abs_dev, limit]);
    }
    out.insert("fig3_control_limits".to_string(), fig3);

    let design = MomentMatchedDesign::reference();
    let bounds = [
        MaximalBound::KolmogorovIndependent(&design.independent),
        MaximalBound::KolmogorovDependent(&design.mixture),
        MaximalBound::BernsteinDependent(&design.mixture),
    ];
    let mut fig4 = FigureSeries::new(&[
        "lambda",
        "kolmogorov_independent",
        "kolmogorov_dependent",
        "bernstein_dependent",
    ]);
    for lambda in log_grid(10.0, 1e4, 200) {
        let mut row = vec![lambda];
        for b in &bounds {
            row.push(b.evaluate(lambda)?.bound_value);
        }
        fig4.push(row);
    }
    out.insert("fig4_bounds".to_string(), fig4);

    let indep: Vec<f64> = table2
        .independent_samples
        .iter()
        .map(|s| s.max_abs_dev)
        .collect();
    let dep: Vec<f64> = table2
        .dependent_samples
        .iter()
        .map(|s| s.max_abs_dev)
        .collect();
    let mut fig5 = FigureSeries::new(&["bin_lo", "bin_hi", "independent", "dependent"]);
    for (lo, c) in histogram(&[&indep, &dep], 5.0) {
        fig5.push(vec![lo, lo + 5.0, c[0] as f64, c[1] as f64]);
    }
    out.insert("fig5_matched_histogram".to_string(), fig5);

    let mut fig6 = FigureSeries::new(&["bin_lo", "bin_hi", "count"]);
    for (lo, c) in histogram(&[&epi.reported_maxima], 250.0) {
        fig6.push(vec![lo, lo + 250.0, c[0] as f64]);
    }
    out.insert("fig6_epi_histogram".to_string(), fig6);

    let mut fig7 = FigureSeries::new(&["lambda_draw", "max_abs_dev"]);
    for s in &table2.dependent_samples {
        fig7.push(vec![s.lambda_draw.unwrap_or(f64::NAN), s.max_abs_dev]);
    }
    out.insert("fig7_lambda_scatter".to_string(), fig7);

    let cfg = ExperimentConfig::new(settings.table2_replications, 0.05, settings.seed)
        .with_workers(settings.workers);
    let curve = efficiency_curve(
        &EFFICIENCY_KAPPA_GRID,
        EFFICIENCY_BASE_MU,
        EFFICIENCY_N,
        &cfg,
    )?;
    let mut fig8 = FigureSeries::new(&["kappa", "efficiency"]);
    for p in curve {
        fig8.push(vec![p.kappa, p.efficiency]);
    }
    out.insert("fig8_efficiency_kappa".to_string(), fig8);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub table2_replications: usize,
    pub epi_replications: usize,
    pub outbreak_replications: usize,
    pub version: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReproductionReport {
    pub table2: Option<Table2Report>,
    pub epi: Option<EpiReport>,
    /// Figure data; written to separate delimited files by the CLI.
    #[serde(skip)]
    pub figure_series: BTreeMap<String, FigureSeries>,
    pub figures: Vec<String>,
    pub environment: Provenance,
}

pub fn reproduce(which: Which, settings: &ReproductionSettings) -> Result<ReproductionReport> {
    let want_table = which != Which::Epi;
    let want_epi = which != Which::Table2;
    let want_figures = matches!(which, Which::Figures | Which::All);

    let table2 = want_table.then(|| run_table2(settings)).transpose()?;
    let epi = want_epi.then(|| run_epi(settings)).transpose()?;
    let figure_series = match (&table2, &epi) {
        (Some(t), Some(e)) if want_figures => figure_series(t, e, settings)?,
        _ => BTreeMap::new(),
    };
    Ok(ReproductionReport {
        table2: table2.map(|t| t.report),
        epi: epi.map(|e| e.report),
        figures: figure_series.keys().cloned().collect(),
        figure_series,
        environment: Provenance {
            seed: settings.seed,
            table2_replications: settings.table2_replications,
            epi_replications: settings.epi_replications,
            outbreak_replications: settings.outbreak_replications,
            version: env!("CARGO_PKG_VERSION"),
        },
    })
}
