//! Seeded Monte Carlo experiments on maximal partial-sum deviations.
//!
//! Replication `i` always draws from stream `i` of the master seed, so the
//! results do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{control_limit, tweedie_variance, MaximalBound};
use crate::distributions::{GammaMixture, NB2Params, NBParams};
use crate::error::{check_open_unit, check_positive, domain, Error, Result};
use crate::rng::RngHandle;

/// Replication count, risk level, seed and worker hint for one experiment.
/// `workers == 0` lets the thread pool pick its own size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub alpha_level: f64,
    pub seed: u64,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(replications: usize, alpha_level: f64, seed: u64) -> Self {
        Self {
            replications,
            alpha_level,
            seed,
            workers: 0,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(domain("replications must be >= 1"));
        }
        check_open_unit("alpha", self.alpha_level)
    }
}

/// Runs `job` once per replication on its own stream and returns the
/// results in replication order.
pub fn replicate<T, F>(seed: u64, replications: usize, workers: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(RngHandle) -> T + Sync + Send,
{
    let run = || {
        (0..replications as u64)
            .into_par_iter()
            .map(|i| job(RngHandle::new(seed, i)))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviationSample {
    pub max_abs_dev: f64,
    pub lambda_draw: Option<f64>,
}

/// `max_k |sum_{i<=k} (x_i - centre_i)|`.
pub fn max_abs_partial_deviation(counts: &[u64], centres: &[f64]) -> f64 {
    let mut s = 0.0f64;
    let mut best = 0.0f64;
    for (&x, &c) in counts.iter().zip(centres) {
        s += x as f64 - c;
        best = best.max(s.abs());
    }
    best
}

/// Percentile of sorted data by linear interpolation between order
/// statistics at position `q (n - 1)`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub replications: usize,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    pub p95: f64,
    pub p99: f64,
    pub theoretical_lambda: f64,
    pub efficiency: f64,
    pub exceedance_rate: f64,
}

impl SimulationSummary {
    pub fn from_values(values: &[f64], theoretical_lambda: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("cannot summarize zero replications"));
        }
        check_positive("theoretical lambda", theoretical_lambda)?;
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let p95 = percentile(&sorted, 0.95);
        let exceed = values.iter().filter(|&&v| v >= theoretical_lambda).count();
        Ok(Self {
            replications: n,
            mean,
            median: percentile(&sorted, 0.5),
            sd,
            p95,
            p99: percentile(&sorted, 0.99),
            theoretical_lambda,
            efficiency: p95 / theoretical_lambda,
            exceedance_rate: exceed as f64 / n as f64,
        })
    }

    pub fn from_samples(samples: &[DeviationSample], theoretical_lambda: f64) -> Result<Self> {
        let values: Vec<f64> = samples.iter().map(|s| s.max_abs_dev).collect();
        Self::from_values(&values, theoretical_lambda)
    }
}

/// Independent counts whose marginals are known in closed form.
trait Marginal: Sync {
    fn mean(&self) -> f64;
    fn nb2(&self) -> NB2Params;
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64;
}

impl Marginal for NBParams {
    fn mean(&self) -> f64 {
        NBParams::mean(self)
    }
    fn nb2(&self) -> NB2Params {
        self.to_nb2()
    }
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample(rng)
    }
}

impl Marginal for NB2Params {
    fn mean(&self) -> f64 {
        self.mu()
    }
    fn nb2(&self) -> NB2Params {
        *self
    }
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        self.sample(rng)
    }
}

fn run_independent<M: Marginal>(
    params: &[M],
    cfg: &ExperimentConfig,
) -> Result<(SimulationSummary, Vec<DeviationSample>)> {
    cfg.validate()?;
    if params.is_empty() {
        return Err(domain("parameter list must not be empty"));
    }
    let nb2: Vec<NB2Params> = params.iter().map(Marginal::nb2).collect();
    let lambda = control_limit(tweedie_variance(&nb2)?, cfg.alpha_level)?;
    let centres: Vec<f64> = params.iter().map(Marginal::mean).collect();
    let samples = replicate(cfg.seed, cfg.replications, cfg.workers, |h| {
        let mut rng = h.stream();
        let counts: Vec<u64> = params.iter().map(|m| m.draw(&mut rng)).collect();
        DeviationSample {
            max_abs_dev: max_abs_partial_deviation(&counts, &centres),
            lambda_draw: None,
        }
    });
    let summary = SimulationSummary::from_samples(&samples, lambda)?;
    Ok((summary, samples))
}

/// Independent NB summands; the threshold is the Tweedie control limit.
pub fn run_independent_experiment(
    params: &[NBParams],
    cfg: &ExperimentConfig,
) -> Result<(SimulationSummary, Vec<DeviationSample>)> {
    run_independent(params, cfg)
}

/// As [`run_independent_experiment`], but in NB2 form so that Poisson
/// (`kappa == 0`) components are allowed.
pub fn run_independent_nb2_experiment(
    params: &[NB2Params],
    cfg: &ExperimentConfig,
) -> Result<(SimulationSummary, Vec<DeviationSample>)> {
    run_independent(params, cfg)
}

/// Shared-Gamma mixture. Deviations are taken against the unconditional
/// means `α θ_i / β`; the threshold inverts the mixing Kolmogorov bound.
pub fn run_dependent_experiment(
    model: &GammaMixture,
    cfg: &ExperimentConfig,
) -> Result<(SimulationSummary, Vec<DeviationSample>)> {
    cfg.validate()?;
    let lambda = MaximalBound::KolmogorovDependent(model).threshold(cfg.alpha_level)?;
    let centres = model.marginal_means();
    let samples = replicate(cfg.seed, cfg.replications, cfg.workers, |h| {
        let mut rng = h.stream();
        let mut counts = Vec::with_capacity(model.len());
        let draw = model.sample_into(&mut rng, &mut counts);
        DeviationSample {
            max_abs_dev: max_abs_partial_deviation(&counts, &centres),
            lambda_draw: Some(draw),
        }
    });
    let summary = SimulationSummary::from_samples(&samples, lambda)?;
    Ok((summary, samples))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(domain("correlation needs at least two points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pearson correlation between the mixing draw and the maximal deviation.
pub fn lambda_correlation(samples: &[DeviationSample]) -> Result<f64> {
    let mut lambdas = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        lambdas.push(s.lambda_draw.ok_or(Error::MissingLambdaDraw(i))?);
    }
    let devs: Vec<f64> = samples.iter().map(|s| s.max_abs_dev).collect();
    pearson(&lambdas, &devs)
}

/// Independent NB design and a shared-Gamma mixture with the same marginal
/// means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentMatchedDesign {
    pub independent: Vec<NBParams>,
    pub mixture: GammaMixture,
}

impl MomentMatchedDesign {
    /// Twenty NB variables cycling over `(3, 0.3), (5, 0.5), (8, 0.7)`,
    /// matched by a mixture with `θ_i` equal to their means and
    /// `shape = rate = round(1 / mean(1/r_i))`.
    pub fn reference() -> Self {
        let base = [(3.0, 0.3), (5.0, 0.5), (8.0, 0.7)];
        let independent: Vec<NBParams> = (0..20)
            .map(|i| {
                let (r, p) = base[i % base.len()];
                NBParams::new(r, p).expect("valid design")
            })
            .collect();
        let mean_dispersion =
            independent.iter().map(|nb| 1.0 / nb.r()).sum::<f64>() / independent.len() as f64;
        // f64::round rounds half away from zero
        let shape = (1.0 / mean_dispersion).round();
        let thetas = independent.iter().map(NBParams::mean).collect();
        let mixture = GammaMixture::new(shape, shape, thetas).expect("valid design");
        Self {
            independent,
            mixture,
        }
    }

    /// Pairs a mixture with independent variables carrying exactly its
    /// marginal laws.
    pub fn from_mixture(mixture: GammaMixture) -> Self {
        let independent = (0..mixture.len()).map(|i| mixture.marginal(i)).collect();
        Self {
            independent,
            mixture,
        }
    }

    pub fn independent_mean_total(&self) -> f64 {
        self.independent.iter().map(NBParams::mean).sum()
    }

    pub fn independent_variance_total(&self) -> f64 {
        self.independent.iter().map(NBParams::variance).sum()
    }

    /// Sum of the mixture's marginal variances.
    pub fn dependent_variance_total(&self) -> f64 {
        (0..self.mixture.len())
            .map(|i| self.mixture.marginal_variance(i))
            .sum()
    }

    /// `|sum Var_dep / sum Var_indep - 1|`.
    pub fn aggregate_variance_gap(&self) -> f64 {
        (self.dependent_variance_total() / self.independent_variance_total() - 1.0).abs()
    }

    /// Largest per-component `|Var_dep,i / Var_indep,i - 1|`.
    pub fn max_component_variance_gap(&self) -> f64 {
        self.independent
            .iter()
            .enumerate()
            .map(|(i, nb)| (self.mixture.marginal_variance(i) / nb.variance() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplificationCheck {
    pub indep_mean: f64,
    pub dep_mean: f64,
    pub ratio: f64,
    pub amplified: bool,
}

/// Compares mean maximal deviations of the two halves of a design.
pub fn amplification_check(
    design: &MomentMatchedDesign,
    replications: usize,
    seed: u64,
    workers: usize,
) -> Result<AmplificationCheck> {
    if replications < 100 {
        return Err(domain(
            "amplification check needs at least 100 replications",
        ));
    }
    let cfg = ExperimentConfig::new(replications, 0.05, seed).with_workers(workers);
    let (indep, _) = run_independent_experiment(&design.independent, &cfg)?;
    let (dep, _) = run_dependent_experiment(&design.mixture, &cfg)?;
    Ok(AmplificationCheck {
        indep_mean: indep.mean,
        dep_mean: dep.mean,
        ratio: dep.mean / indep.mean,
        amplified: dep.mean > indep.mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyPoint {
    pub kappa: f64,
    pub efficiency: f64,
}

/// Bound efficiency of `n` homogeneous NB2(`base_mu`, κ) variables for each
/// κ in the grid. Every grid point reuses the configured seed.
pub fn efficiency_curve(
    kappa_grid: &[f64],
    base_mu: f64,
    n: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<EfficiencyPoint>> {
    if kappa_grid.is_empty() {
        return Err(domain("kappa grid must not be empty"));
    }
    if n == 0 {
        return Err(domain("n must be >= 1"));
    }
    kappa_grid
        .iter()
        .map(|&kappa| {
            let params = vec![NB2Params::new(base_mu, kappa)?; n];
            let (summary, _) = run_independent_nb2_experiment(&params, cfg)?;
            Ok(EfficiencyPoint {
                kappa,
                efficiency: summary.efficiency,
            })
        })
        .collect()
}
