//! Multi-region count surveillance with Tweedie control limits.

use serde::{Deserialize, Serialize};

use crate::bounds::control_limit;
use crate::distributions::NB2Params;
use crate::error::{check_positive, domain, Error, Result};
use crate::simulation::{
    max_abs_partial_deviation, replicate, ExperimentConfig, SimulationSummary,
};

/// Weekly NB2 law of one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub weekly_mu: f64,
    pub kappa: f64,
}

impl Region {
    pub fn weekly_params(&self) -> Result<NB2Params> {
        NB2Params::new(self.weekly_mu, self.kappa)
            .map_err(|e| domain(format!("region {}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpiScenario {
    regions: Vec<Region>,
    weeks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ControlLimit {
    pub alpha_level: f64,
    pub lambda: f64,
}

impl EpiScenario {
    pub fn new(regions: Vec<Region>, weeks: usize) -> Result<Self> {
        if regions.is_empty() {
            return Err(domain("scenario needs at least one region"));
        }
        if weeks == 0 {
            return Err(domain("weeks must be >= 1"));
        }
        for r in &regions {
            r.weekly_params()?;
        }
        Ok(Self { regions, weeks })
    }

    /// Five regions monitored for twelve weeks, with weekly means
    /// (210, 340, 290, 480, 380) and dispersions (0.35, 0.25, 0.40, 0.20, 0.30).
    pub fn reference() -> Self {
        let mus = [210.0, 340.0, 290.0, 480.0, 380.0];
        let kappas = [0.35, 0.25, 0.40, 0.20, 0.30];
        let regions = mus
            .iter()
            .zip(kappas)
            .enumerate()
            .map(|(i, (&weekly_mu, kappa))| Region {
                name: format!("region{}", i + 1),
                weekly_mu,
                kappa,
            })
            .collect();
        Self::new(regions, 12).expect("valid reference scenario")
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn weeks(&self) -> usize {
        self.weeks
    }

    pub fn weekly_params(&self) -> Vec<NB2Params> {
        self.regions
            .iter()
            .map(|r| r.weekly_params().expect("validated at construction"))
            .collect()
    }

    pub fn weekly_means(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.weekly_mu).collect()
    }

    pub fn cumulative_means(&self) -> Vec<f64> {
        let w = self.weeks as f64;
        self.regions.iter().map(|r| w * r.weekly_mu).collect()
    }

    pub fn cumulative_variances(&self) -> Vec<f64> {
        let w = self.weeks as f64;
        self.weekly_params()
            .iter()
            .map(|p| w * p.variance())
            .collect()
    }

    pub fn total_expected(&self) -> f64 {
        self.cumulative_means().iter().sum()
    }

    /// `V_n = weeks * sum_j (mu_j + kappa_j mu_j^2)`.
    pub fn tweedie_variance(&self) -> f64 {
        let weekly: f64 = self.weekly_params().iter().map(NB2Params::variance).sum();
        self.weeks as f64 * weekly
    }
}

/// Cumulative control limit `sqrt(V_n / alpha)` for each requested level.
pub fn epi_control_limits(
    scenario: &EpiScenario,
    alpha_levels: &[f64],
) -> Result<Vec<ControlLimit>> {
    let v_n = scenario.tweedie_variance();
    alpha_levels
        .iter()
        .map(|&alpha_level| {
            Ok(ControlLimit {
                alpha_level,
                lambda: control_limit(v_n, alpha_level)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonitoringRecord {
    pub period: usize,
    pub cumulative_deviation: f64,
    pub control_limit: f64,
    pub alarm: bool,
}

/// Running state of the cumulative deviation monitor. Transitions are pure:
/// [`MonitoringState::step`] returns a new state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitoringState {
    period_index: usize,
    horizon: usize,
    cumulative_deviation: f64,
    control_limit: f64,
    alarm: bool,
    history: Vec<MonitoringRecord>,
}

impl MonitoringState {
    pub fn new(control_limit: f64, horizon: usize) -> Result<Self> {
        check_positive("control limit", control_limit)?;
        if horizon == 0 {
            return Err(domain("monitoring horizon must be >= 1"));
        }
        Ok(Self {
            period_index: 0,
            horizon,
            cumulative_deviation: 0.0,
            control_limit,
            alarm: false,
            history: Vec::new(),
        })
    }

    pub fn for_scenario(scenario: &EpiScenario, alpha_level: f64) -> Result<Self> {
        let limit = control_limit(scenario.tweedie_variance(), alpha_level)?;
        Self::new(limit, scenario.weeks())
    }

    pub fn period_index(&self) -> usize {
        self.period_index
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn cumulative_deviation(&self) -> f64 {
        self.cumulative_deviation
    }

    pub fn control_limit(&self) -> f64 {
        self.control_limit
    }

    /// Alarm status after the latest update.
    pub fn alarm(&self) -> bool {
        self.alarm
    }

    /// Whether any period so far raised an alarm.
    pub fn any_alarm(&self) -> bool {
        self.history.iter().any(|h| h.alarm)
    }

    pub fn history(&self) -> &[MonitoringRecord] {
        &self.history
    }

    /// Adds one period of regional counts. The alarm fires when
    /// `|S_t| >= control_limit`.
    pub fn step(&self, counts: &[u64], fitted_mu: &[f64]) -> Result<Self> {
        if counts.len() != fitted_mu.len() {
            return Err(Error::LengthMismatch {
                expected: fitted_mu.len(),
                actual: counts.len(),
            });
        }
        if self.period_index >= self.horizon {
            return Err(Error::HorizonExceeded(self.horizon));
        }
        let excess: f64 = counts
            .iter()
            .zip(fitted_mu)
            .map(|(&x, &m)| x as f64 - m)
            .sum();
        let s = self.cumulative_deviation + excess;
        let alarm = s.abs() >= self.control_limit;
        let mut history = self.history.clone();
        history.push(MonitoringRecord {
            period: self.period_index + 1,
            cumulative_deviation: s,
            control_limit: self.control_limit,
            alarm,
        });
        Ok(Self {
            period_index: self.period_index + 1,
            cumulative_deviation: s,
            alarm,
            history,
            ..*self
        })
    }

    /// Feeds a whole count matrix (one row per period).
    pub fn replay(&self, rows: &[Vec<u64>], fitted_mu: &[f64]) -> Result<Self> {
        rows.iter()
            .try_fold(self.clone(), |state, row| state.step(row, fitted_mu))
    }
}

/// Free-function form of [`MonitoringState::step`].
pub fn monitor_step(
    state: &MonitoringState,
    counts: &[u64],
    fitted_mu: &[f64],
) -> Result<MonitoringState> {
    state.step(counts, fitted_mu)
}

/// Index set over which the maximal cumulative deviation is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaxOrdering {
    /// Prefixes over regions of the horizon-cumulative counts.
    RegionPrefix,
    /// Prefixes over weeks of the all-region totals.
    TimePrefix,
}

impl MaxOrdering {
    pub const ALL: [MaxOrdering; 2] = [MaxOrdering::RegionPrefix, MaxOrdering::TimePrefix];

    pub fn name(self) -> &'static str {
        match self {
            MaxOrdering::RegionPrefix => "region-prefix",
            MaxOrdering::TimePrefix => "time-prefix",
        }
    }
}

/// Draws a weeks x regions matrix of weekly counts, week-major.
fn sample_weeks<R: rand::Rng + ?Sized>(
    weekly: &[NB2Params],
    weeks: usize,
    rng: &mut R,
) -> Vec<u64> {
    let mut out = Vec::with_capacity(weeks * weekly.len());
    for _ in 0..weeks {
        out.extend(weekly.iter().map(|p| p.sample(rng)));
    }
    out
}

fn max_deviation(matrix: &[u64], scenario: &EpiScenario, ordering: MaxOrdering) -> f64 {
    let n_regions = scenario.regions().len();
    match ordering {
        MaxOrdering::RegionPrefix => {
            let mut cumulative = vec![0u64; n_regions];
            for row in matrix.chunks(n_regions) {
                for (c, &x) in cumulative.iter_mut().zip(row) {
                    *c += x;
                }
            }
            max_abs_partial_deviation(&cumulative, &scenario.cumulative_means())
        }
        MaxOrdering::TimePrefix => {
            let totals: Vec<u64> = matrix
                .chunks(n_regions)
                .map(|row| row.iter().sum())
                .collect();
            let weekly_total: f64 = scenario.weekly_means().iter().sum();
            max_abs_partial_deviation(&totals, &vec![weekly_total; scenario.weeks()])
        }
    }
}

/// Monte Carlo validation of the cumulative control limit. Each replication
/// sums independent weekly NB2 draws per region. Returns the summary and
/// the per-replication maxima.
pub fn run_epi_validation(
    scenario: &EpiScenario,
    cfg: &ExperimentConfig,
    ordering: MaxOrdering,
) -> Result<(SimulationSummary, Vec<f64>)> {
    if cfg.replications == 0 {
        return Err(domain("replications must be >= 1"));
    }
    let lambda = control_limit(scenario.tweedie_variance(), cfg.alpha_level)?;
    let weekly = scenario.weekly_params();
    let maxima = replicate(cfg.seed, cfg.replications, cfg.workers, |h| {
        let mut rng = h.stream();
        let matrix = sample_weeks(&weekly, scenario.weeks(), &mut rng);
        max_deviation(&matrix, scenario, ordering)
    });
    let summary = SimulationSummary::from_values(&maxima, lambda)?;
    Ok((summary, maxima))
}

/// Multiplicative shift of one region's weekly mean from a given week on.
/// `region` is 0-based, `from_week` 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutbreakShift {
    pub region: usize,
    pub factor: f64,
    pub from_week: usize,
}

/// Fraction of replications in which the monitor, fed counts from the
/// shifted process and the unshifted fitted means, raises an alarm at some
/// week of the horizon.
pub fn outbreak_alarm_rate(
    scenario: &EpiScenario,
    shift: OutbreakShift,
    cfg: &ExperimentConfig,
) -> Result<f64> {
    if shift.region >= scenario.regions().len() {
        return Err(domain(format!("no region with index {}", shift.region)));
    }
    check_positive("shift factor", shift.factor)?;
    if cfg.replications == 0 {
        return Err(domain("replications must be >= 1"));
    }
    let start = MonitoringState::for_scenario(scenario, cfg.alpha_level)?;
    let baseline = scenario.weekly_params();
    let mut shifted = baseline.clone();
    let r = &scenario.regions()[shift.region];
    shifted[shift.region] = NB2Params::new(r.weekly_mu * shift.factor, r.kappa)?;
    let fitted = scenario.weekly_means();

    let alarms = replicate(cfg.seed, cfg.replications, cfg.workers, |h| {
        let mut rng = h.stream();
        let mut state = start.clone();
        for week in 1..=scenario.weeks() {
            let law = if week >= shift.from_week {
                &shifted
            } else {
                &baseline
            };
            let counts: Vec<u64> = law.iter().map(|p| p.sample(&mut rng)).collect();
            state = state.step(&counts, &fitted).expect("consistent dimensions");
            if state.alarm() {
                return true;
            }
        }
        false
    });
    Ok(alarms.iter().filter(|&&a| a).count() as f64 / alarms.len() as f64)
}
