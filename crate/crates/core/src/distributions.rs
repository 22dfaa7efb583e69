//! Negative Binomial, Poisson and Gamma building blocks, and the shared-Gamma
//! mixture model.
//!
//! Gamma variables are always parameterized by shape and *rate*
//! (mean = shape / rate). Sampling of Negative Binomial variables goes
//! through the Gamma-Poisson hierarchy, so real-valued `r` is supported.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_open_unit, check_positive, domain, Error, Result};

/// Negative Binomial law counting failures before the `r`-th success,
/// with success probability `p`. `r` may be any positive real.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NBParams {
    r: f64,
    p: f64,
    #[serde(skip)]
    q: f64,
}

impl NBParams {
    pub fn new(r: f64, p: f64) -> Result<Self> {
        check_positive("r", r)?;
        check_open_unit("p", p)?;
        Ok(Self { r, p, q: 1.0 - p })
    }

    /// Builds from the failure probability `q = 1 - p`, which is kept as
    /// given rather than recomputed from `p`.
    pub fn from_failure_probability(r: f64, q: f64) -> Result<Self> {
        check_positive("r", r)?;
        check_open_unit("1 - p", q)?;
        Ok(Self { r, p: 1.0 - q, q })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mean(&self) -> f64 {
        self.r * self.q / self.p
    }

    pub fn variance(&self) -> f64 {
        self.r * self.q / (self.p * self.p)
    }

    /// Variance-to-mean ratio, `1 + (1 - p) / p = 1 + mean / r`.
    pub fn overdispersion_index(&self) -> f64 {
        1.0 + self.q / self.p
    }

    /// Same law in mean/dispersion form.
    pub fn to_nb2(&self) -> NB2Params {
        NB2Params {
            mu: self.mean(),
            kappa: 1.0 / self.r,
        }
    }

    /// Right end of the MGF domain, `-ln(1 - p)`.
    pub fn mgf_domain_end(&self) -> f64 {
        -self.q.ln()
    }

    /// Log moment generating function `r (ln p - ln(1 - (1 - p) e^t))`.
    ///
    /// `1 - (1 - p) e^t` is formed as `-expm1(t + ln(1 - p))`, which keeps
    /// full relative precision as `t` approaches the domain end.
    pub fn log_mgf(&self, t: f64) -> Result<f64> {
        let t_max = self.mgf_domain_end();
        if t.is_nan() || t >= t_max {
            return Err(Error::MgfDomainExceeded { t, t_max });
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let ln_q = self.q.ln();
        let gap = -(t + ln_q).exp_m1();
        Ok(self.r * (self.p.ln() - gap.ln()))
    }

    /// `d/dt log_mgf(t) = r (1 - p) e^t / (1 - (1 - p) e^t)`.
    pub fn log_mgf_derivative(&self, t: f64) -> Result<f64> {
        let t_max = self.mgf_domain_end();
        if t.is_nan() || t >= t_max {
            return Err(Error::MgfDomainExceeded { t, t_max });
        }
        let x = t + self.q.ln();
        Ok(self.r * x.exp() / -x.exp_m1())
    }

    pub fn log_pmf(&self, k: u64) -> f64 {
        let k = k as f64;
        ln_gamma(k + self.r) - ln_gamma(self.r) - ln_gamma(k + 1.0)
            + self.r * self.p.ln()
            + k * self.q.ln()
    }

    pub fn pmf(&self, k: u64) -> f64 {
        self.log_pmf(k).exp()
    }

    /// Probabilities `P(X = 0..=k_max)` by the ratio recurrence
    /// `pmf(k+1) = pmf(k) (k + r) (1 - p) / (k + 1)`.
    pub fn pmf_table(&self, k_max: usize) -> Vec<f64> {
        let q = self.q;
        let mut out = Vec::with_capacity(k_max + 1);
        let mut cur = (self.r * self.p.ln()).exp();
        for k in 0..=k_max {
            out.push(cur);
            let kf = k as f64;
            cur *= (kf + self.r) * q / (kf + 1.0);
        }
        out
    }

    /// Leading pmf values `P(X = 0..=K)` whose discarded tail `P(X > K)` is
    /// at most `tail_mass`, together with a rigorous upper bound on that
    /// discarded mass.
    pub fn truncated_support(&self, tail_mass: f64) -> (Vec<f64>, f64) {
        let q = self.q;
        let mut table = Vec::new();
        let mut cur = (self.r * self.p.ln()).exp();
        let mut k = 0usize;
        loop {
            table.push(cur);
            // successive pmf ratios tend to q monotonically, so every later
            // ratio is at most max(current ratio, q)
            let ratio = (k as f64 + self.r) * q / (k as f64 + 1.0);
            let sup_ratio = ratio.max(q);
            if sup_ratio < 1.0 {
                let tail_bound = cur * ratio / (1.0 - sup_ratio);
                if tail_bound <= tail_mass {
                    return (table, tail_bound);
                }
            }
            cur *= ratio;
            k += 1;
        }
    }

    /// One draw, as `Poisson(G)` with `G ~ Gamma(shape = r, rate = p / (1 - p))`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let rate = self.p / self.q;
        let g = sample_gamma(self.r, rate, rng);
        sample_poisson(g, rng)
    }
}

/// NB2 (GLM) form: mean `mu`, dispersion `kappa = 1/r`, variance
/// `mu + kappa mu^2`. `kappa == 0` is the Poisson limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NB2Params {
    mu: f64,
    kappa: f64,
}

impl NB2Params {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        check_positive("mu", mu)?;
        if !(kappa.is_finite() && kappa >= 0.0) {
            return Err(domain(format!(
                "kappa must be finite and >= 0, got {kappa}"
            )));
        }
        Ok(Self { mu, kappa })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn is_poisson(&self) -> bool {
        self.kappa == 0.0
    }

    pub fn variance(&self) -> f64 {
        self.mu + self.kappa * self.mu * self.mu
    }

    /// `r = 1/kappa`, `p = 1/(1 + kappa mu)`.
    pub fn to_nb(&self) -> Result<NBParams> {
        if self.is_poisson() {
            return Err(Error::PoissonLimitNotRepresentable);
        }
        let km = self.kappa * self.mu;
        let mut nb = NBParams::new(1.0 / self.kappa, 1.0 / (1.0 + km))?;
        nb.q = km / (1.0 + km);
        Ok(nb)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self.to_nb() {
            Ok(nb) => nb.sample(rng),
            Err(_) => sample_poisson(self.mu, rng),
        }
    }
}

impl TryFrom<NB2Params> for NBParams {
    type Error = Error;

    fn try_from(value: NB2Params) -> Result<Self> {
        value.to_nb()
    }
}

impl From<NBParams> for NB2Params {
    fn from(value: NBParams) -> Self {
        value.to_nb2()
    }
}

/// Exact Poisson draw. Means below 12 use the multiplicative (Knuth)
/// method, larger means the Ahrens-Dieter transformed rejection scheme.
/// A zero (or NaN) mean yields zero.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean.is_nan() || mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("finite positive Poisson mean");
    dist.sample(rng) as u64
}

/// Gamma draw with shape/rate parameterization.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive gamma parameters")
        .sample(rng)
}

/// Shared latent rate `Λ ~ Gamma(shape, rate)` with
/// `X_i | Λ ~ Poisson(Λ θ_i)` conditionally independent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaMixture {
    gamma_shape: f64,
    gamma_rate: f64,
    thetas: Vec<f64>,
    #[serde(skip)]
    prefix: Vec<f64>,
}

/// One joint draw from a [`GammaMixture`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraw {
    pub lambda_draw: f64,
    pub counts: Vec<u64>,
}

impl GammaMixture {
    pub fn new(gamma_shape: f64, gamma_rate: f64, thetas: Vec<f64>) -> Result<Self> {
        check_positive("gamma_shape", gamma_shape)?;
        check_positive("gamma_rate", gamma_rate)?;
        if thetas.is_empty() {
            return Err(domain("mixture needs at least one loading"));
        }
        for (i, &t) in thetas.iter().enumerate() {
            check_positive(&format!("theta[{i}]"), t)?;
        }
        let prefix = thetas
            .iter()
            .scan(0.0, |acc, &t| {
                *acc += t;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            gamma_shape,
            gamma_rate,
            thetas,
            prefix,
        })
    }

    pub fn gamma_shape(&self) -> f64 {
        self.gamma_shape
    }

    pub fn gamma_rate(&self) -> f64 {
        self.gamma_rate
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    /// `Θ_k` for `k = 1..=n`.
    pub fn prefix_sums(&self) -> &[f64] {
        &self.prefix
    }

    /// `Θ_n`.
    pub fn theta_total(&self) -> f64 {
        *self.prefix.last().expect("nonempty")
    }

    /// `M = max_k Θ_k`, which equals `Θ_n` because every loading is positive.
    pub fn max_prefix(&self) -> f64 {
        self.prefix
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lambda_mean(&self) -> f64 {
        self.gamma_shape / self.gamma_rate
    }

    pub fn lambda_variance(&self) -> f64 {
        self.gamma_shape / (self.gamma_rate * self.gamma_rate)
    }

    /// Sub-exponential variance proxy of the centered mixing variable.
    pub fn subexp_nu_sq(&self) -> f64 {
        self.lambda_variance()
    }

    /// Sub-exponential scale of the centered mixing variable.
    pub fn subexp_b(&self) -> f64 {
        1.0 / self.gamma_rate
    }

    /// Marginal law of component `i`: `NB(shape, rate / (rate + θ_i))`.
    pub fn marginal(&self, i: usize) -> NBParams {
        let (b, t) = (self.gamma_rate, self.thetas[i]);
        let mut nb = NBParams::new(self.gamma_shape, b / (b + t)).expect("valid mixture marginal");
        nb.q = t / (b + t);
        nb
    }

    pub fn marginal_mean(&self, i: usize) -> f64 {
        self.gamma_shape * self.thetas[i] / self.gamma_rate
    }

    pub fn marginal_variance(&self, i: usize) -> f64 {
        let (a, b, t) = (self.gamma_shape, self.gamma_rate, self.thetas[i]);
        a * t * (b + t) / (b * b)
    }

    pub fn marginal_means(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.marginal_mean(i)).collect()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let (b, ti, tj) = (self.gamma_rate, self.thetas[i], self.thetas[j]);
        (ti * tj).sqrt() / ((b + ti) * (b + tj)).sqrt()
    }

    /// Draws `Λ` and fills `counts` with the conditional Poisson counts.
    /// Returns the `Λ` draw.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, counts: &mut Vec<u64>) -> f64 {
        let lambda = sample_gamma(self.gamma_shape, self.gamma_rate, rng);
        counts.clear();
        counts.extend(self.thetas.iter().map(|&t| sample_poisson(lambda * t, rng)));
        lambda
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MixtureDraw {
        let mut counts = Vec::with_capacity(self.len());
        let lambda_draw = self.sample_into(rng, &mut counts);
        MixtureDraw {
            lambda_draw,
            counts,
        }
    }
}
