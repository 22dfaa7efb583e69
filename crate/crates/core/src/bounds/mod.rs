//! Tail bounds for maximal partial-sum deviations of Negative Binomial sums.
//!
//! Every bound is evaluated in log space where products or exponentials are
//! involved and is reported both raw and clamped to `[0, 1]`.

mod optimize;
mod oracle;

pub use optimize::{golden_section, Minimum};
pub use oracle::{
    exact_max_deviation_tail_oracle, exact_mean_deviation_tail, OracleValue, ORACLE_STATE_LIMIT,
    ORACLE_TAIL_MASS,
};

use serde::Serialize;

use crate::distributions::{GammaMixture, NB2Params, NBParams};
use crate::error::{check_open_unit, check_positive, domain, Error, Result};

/// Relative distance kept from both ends of the Chernoff search interval.
pub const CHERNOFF_EDGE: f64 = 1e-10;
/// Largest threshold tried by [`invert_bound`].
pub const INVERSION_LIMIT: f64 = 1e12;
/// Relative bisection tolerance of [`invert_bound`].
pub const INVERSION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundComponents {
    pub cond_term: f64,
    pub mix_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerReport {
    pub t_star: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// An evaluated tail bound. `bound_value` is `raw_bound` clamped to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundResult {
    pub threshold: f64,
    pub bound_value: f64,
    pub raw_bound: f64,
    pub components: Option<BoundComponents>,
    pub optimizer: Option<OptimizerReport>,
}

impl BoundResult {
    fn plain(threshold: f64, raw_bound: f64) -> Self {
        Self {
            threshold,
            bound_value: raw_bound.min(1.0),
            raw_bound,
            components: None,
            optimizer: None,
        }
    }

    fn split(threshold: f64, cond_term: f64, mix_term: f64) -> Self {
        let raw_bound = cond_term + mix_term;
        Self {
            components: Some(BoundComponents {
                cond_term,
                mix_term,
            }),
            ..Self::plain(threshold, raw_bound)
        }
    }
}

fn check_nonempty<T>(params: &[T]) -> Result<()> {
    if params.is_empty() {
        Err(domain("parameter list must not be empty"))
    } else {
        Ok(())
    }
}

/// Log of the Chernoff objective for the sample-mean deviation `a` at `t`:
/// `-t n a - t sum(mean_i) + sum(log MGF_i(t))`.
pub fn chernoff_log_objective(params: &[NBParams], a: f64, t: f64) -> Result<f64> {
    let n = params.len() as f64;
    let mut acc = -t * n * a;
    for nb in params {
        acc += nb.log_mgf(t)? - t * nb.mean();
    }
    Ok(acc)
}

/// `d/dt` of [`chernoff_log_objective`].
pub fn chernoff_log_objective_derivative(params: &[NBParams], a: f64, t: f64) -> Result<f64> {
    let n = params.len() as f64;
    let mut acc = -n * a;
    for nb in params {
        acc += nb.log_mgf_derivative(t)? - nb.mean();
    }
    Ok(acc)
}

/// Bisection on the sign of `slope` inside `[lo, hi]`, assuming
/// `slope(lo) < 0 < slope(hi)`. Stops when the midpoint no longer moves.
fn bisect_slope<F: Fn(f64) -> f64>(slope: F, mut lo: f64, mut hi: f64) -> (f64, usize) {
    let mut iterations = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || iterations >= 200 {
            return (mid, iterations);
        }
        iterations += 1;
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Optimized exponential-moment bound on `P(mean(X) - E[mean(X)] >= a)` for
/// independent `X_i ~ NB(r_i, p_i)`.
///
/// The log-objective is convex in `t`, so a golden-section search over
/// `[ε t_max, (1 - ε) t_max]` with `t_max = -ln(1 - p_min)` finds the
/// infimum without leaving the MGF domain.
pub fn chernoff_mean_deviation_bound(params: &[NBParams], a: f64) -> Result<BoundResult> {
    check_nonempty(params)?;
    check_positive("a", a)?;
    let t_max = params
        .iter()
        .map(NBParams::mgf_domain_end)
        .fold(f64::INFINITY, f64::min);
    let lo = CHERNOFF_EDGE * t_max;
    let hi = (1.0 - CHERNOFF_EDGE) * t_max;
    let objective = |t: f64| chernoff_log_objective(params, a, t).unwrap_or(f64::INFINITY);
    let mut min = golden_section(objective, lo, hi, CHERNOFF_EDGE * t_max, 1_000);

    // Values near the minimum are flat to rounding, so golden section alone
    // pins t* only to ~sqrt(eps). Refine on the analytic slope.
    let slope = |t: f64| chernoff_log_objective_derivative(params, a, t).unwrap_or(f64::INFINITY);
    if slope(lo) < 0.0 && slope(hi) > 0.0 {
        let (t, steps) = bisect_slope(slope, lo, hi);
        min.iterations += steps;
        min.x = t;
        min.value = objective(t);
    }
    let raw = min.value.exp();
    Ok(BoundResult {
        optimizer: Some(OptimizerReport {
            t_star: min.x,
            iterations: min.iterations,
            converged: min.converged,
        }),
        ..BoundResult::plain(a, raw)
    })
}

/// Total NB2 variance `V_n = sum(mu_i + kappa_i mu_i^2)`.
pub fn tweedie_variance(params: &[NB2Params]) -> Result<f64> {
    check_nonempty(params)?;
    Ok(params.iter().map(NB2Params::variance).sum())
}

/// Control limit `sqrt(V_n / alpha)`.
pub fn control_limit(v_n: f64, alpha_level: f64) -> Result<f64> {
    check_positive("V_n", v_n)?;
    check_open_unit("alpha", alpha_level)?;
    Ok((v_n / alpha_level).sqrt())
}

/// Kolmogorov bound `λ^-2 sum(Var X_i)` for independent NB summands.
pub fn kolmogorov_independent_bound(params: &[NBParams], lambda: f64) -> Result<BoundResult> {
    check_nonempty(params)?;
    check_positive("lambda", lambda)?;
    let total_variance: f64 = params.iter().map(NBParams::variance).sum();
    Ok(BoundResult::plain(
        lambda,
        total_variance / (lambda * lambda),
    ))
}

/// Kolmogorov-type bound under shared Gamma mixing, split into the
/// conditional Poisson term `4 (α/β) Θ_n / λ²` and the mixing term
/// `4 M² α / (β² λ²)`.
pub fn dependent_kolmogorov_bound(model: &GammaMixture, lambda: f64) -> Result<BoundResult> {
    check_positive("lambda", lambda)?;
    let (alpha, beta) = (model.gamma_shape(), model.gamma_rate());
    let m = model.max_prefix();
    let l2 = lambda * lambda;
    let cond = 4.0 * (alpha / beta) * model.theta_total() / l2;
    let mix = 4.0 * m * m * alpha / (beta * beta * l2);
    Ok(BoundResult::split(lambda, cond, mix))
}

/// Exponent of the mixing term of [`bernstein_dependent_bound`]:
/// `min(λ²β² / (32 M² α), λβ / (4M))`. The quadratic branch is active
/// below `λ = 8 M α / β`.
pub fn bernstein_mix_exponent(model: &GammaMixture, lambda: f64) -> f64 {
    let (alpha, beta) = (model.gamma_shape(), model.gamma_rate());
    let m = model.max_prefix();
    let quadratic = lambda * lambda * beta * beta / (32.0 * m * m * alpha);
    let linear = lambda * beta / (4.0 * m);
    quadratic.min(linear)
}

/// Sub-exponential Bernstein bound under shared Gamma mixing:
/// `2 exp(-(λ²/16) / (αΘ_n/β + λ/6)) + 2 exp(-bernstein_mix_exponent)`.
pub fn bernstein_dependent_bound(model: &GammaMixture, lambda: f64) -> Result<BoundResult> {
    check_positive("lambda", lambda)?;
    let (alpha, beta) = (model.gamma_shape(), model.gamma_rate());
    let cond_exponent =
        (lambda * lambda / 16.0) / (alpha * model.theta_total() / beta + lambda / 6.0);
    let ln2 = std::f64::consts::LN_2;
    let cond = (ln2 - cond_exponent).exp();
    let mix = (ln2 - bernstein_mix_exponent(model, lambda)).exp();
    Ok(BoundResult::split(lambda, cond, mix))
}

/// Smallest `λ` with `bound(λ) <= alpha_level`.
///
/// The bracket grows geometrically from `λ = 1` (doubling up to
/// [`INVERSION_LIMIT`], or halving when `λ = 1` already qualifies), then
/// bisection narrows it to a relative width of [`INVERSION_TOL`]. `bound`
/// must be nonincreasing in `λ`.
pub fn invert_bound<F>(bound: F, alpha_level: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    check_open_unit("alpha", alpha_level)?;
    let below = |l: f64| bound(l) <= alpha_level;

    let (mut lo, mut hi);
    if below(1.0) {
        hi = 1.0;
        lo = 0.5;
        while below(lo) {
            hi = lo;
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(domain(format!(
                    "bound is below {alpha_level} for every positive threshold"
                )));
            }
        }
    } else {
        lo = 1.0;
        hi = 2.0;
        while !below(hi) {
            lo = hi;
            hi *= 2.0;
            if hi > INVERSION_LIMIT {
                return Err(Error::Uninvertible {
                    alpha: alpha_level,
                    limit: INVERSION_LIMIT,
                });
            }
        }
    }
    while hi - lo > INVERSION_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The three maximal-deviation bounds, for evaluation and inversion by name.
#[derive(Debug, Clone, Copy)]
pub enum MaximalBound<'a> {
    KolmogorovIndependent(&'a [NBParams]),
    KolmogorovDependent(&'a GammaMixture),
    BernsteinDependent(&'a GammaMixture),
}

impl MaximalBound<'_> {
    pub fn evaluate(&self, lambda: f64) -> Result<BoundResult> {
        match *self {
            Self::KolmogorovIndependent(p) => kolmogorov_independent_bound(p, lambda),
            Self::KolmogorovDependent(m) => dependent_kolmogorov_bound(m, lambda),
            Self::BernsteinDependent(m) => bernstein_dependent_bound(m, lambda),
        }
    }

    /// Threshold at which the bound first drops to `alpha_level`.
    pub fn threshold(&self, alpha_level: f64) -> Result<f64> {
        if let Self::KolmogorovIndependent(p) = self {
            check_nonempty(p)?;
        }
        invert_bound(
            |l| self.evaluate(l).map_or(1.0, |b| b.bound_value),
            alpha_level,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn nb(r: f64, p: f64) -> NBParams {
        NBParams::new(r, p).unwrap()
    }

    fn cycle_design() -> Vec<NBParams> {
        let base = [nb(3.0, 0.3), nb(5.0, 0.5), nb(8.0, 0.7)];
        (0..20).map(|i| base[i % 3]).collect()
    }

    #[test]
    fn chernoff_small_deviation_tends_to_one() {
        let p = [nb(3.0, 0.3), nb(5.0, 0.5)];
        let b = chernoff_mean_deviation_bound(&p, 1e-9).unwrap();
        assert!(b.bound_value > 0.999_999, "{b:?}");
        assert!(b.bound_value <= 1.0);
    }

    #[test]
    fn chernoff_reported_t_star_reproduces_bound() {
        let p = [nb(3.0, 0.3)];
        let b = chernoff_mean_deviation_bound(&p, 5.0).unwrap();
        let opt = b.optimizer.unwrap();
        assert!(opt.converged);
        let t = opt.t_star;
        let direct = (-t * 5.0 - t * 7.0 + p[0].log_mgf(t).unwrap()).exp();
        assert_relative_eq!(b.raw_bound, direct, max_relative = 1e-12);
        assert!(b.bound_value < 1.0);
    }

    #[test]
    fn chernoff_rejects_bad_input() {
        assert!(chernoff_mean_deviation_bound(&[], 1.0).is_err());
        assert!(chernoff_mean_deviation_bound(&[nb(1.0, 0.5)], 0.0).is_err());
        assert!(chernoff_mean_deviation_bound(&[nb(1.0, 0.5)], -1.0).is_err());
    }

    #[test]
    fn tweedie_variance_cases() {
        let design: Vec<NB2Params> = cycle_design().iter().map(|p| p.to_nb2()).collect();
        let v = tweedie_variance(&design).unwrap();
        assert!((v - 262.7).abs() < 0.05, "{v}");

        let poisson = [NB2Params::new(5.0, 0.0).unwrap()];
        assert_eq!(tweedie_variance(&poisson).unwrap(), 5.0);
        assert!(tweedie_variance(&[]).is_err());
    }

    #[test]
    fn control_limit_values() {
        let design: Vec<NB2Params> = cycle_design().iter().map(|p| p.to_nb2()).collect();
        let v = tweedie_variance(&design).unwrap();
        assert!((control_limit(v, 0.05).unwrap() - 72.5).abs() < 0.05);
        assert!((control_limit(2_028_900.0, 0.05).unwrap() - 6370.0).abs() < 1.0);
        assert!((control_limit(2_028_900.0, 0.01).unwrap() - 14_244.0).abs() < 1.0);
        assert!(control_limit(0.0, 0.05).is_err());
        assert!(control_limit(1.0, 1.0).is_err());
        assert!(control_limit(1.0, 0.0).is_err());
    }

    #[test]
    fn kolmogorov_independent_cases() {
        let design = cycle_design();
        let b = kolmogorov_independent_bound(&design, 72.49).unwrap();
        assert!((b.bound_value - 0.05).abs() < 1e-3);
        let small = kolmogorov_independent_bound(&[nb(3.0, 0.3)], 1.0).unwrap();
        assert_eq!(small.bound_value, 1.0);
        assert!(small.raw_bound > 1.0);
        assert!(kolmogorov_independent_bound(&design, 0.0).is_err());
    }

    #[test]
    fn dependent_kolmogorov_single_component() {
        let m = GammaMixture::new(1.0, 1.0, vec![1.0]).unwrap();
        let b = dependent_kolmogorov_bound(&m, 10.0).unwrap();
        let c = b.components.unwrap();
        assert_relative_eq!(c.cond_term, 0.04, max_relative = 1e-14);
        assert_relative_eq!(c.mix_term, 0.04, max_relative = 1e-14);
        assert_relative_eq!(b.bound_value, 0.08, max_relative = 1e-14);
    }

    #[test]
    fn dependent_kolmogorov_homogeneity() {
        let m = GammaMixture::new(2.5, 1.5, vec![3.0, 1.0, 4.0]).unwrap();
        let a = dependent_kolmogorov_bound(&m, 50.0).unwrap().raw_bound;
        let b = dependent_kolmogorov_bound(&m, 100.0).unwrap().raw_bound;
        assert_relative_eq!(a / b, 4.0, max_relative = 1e-13);
    }

    #[test]
    fn bernstein_clamps_near_zero() {
        let m = GammaMixture::new(4.0, 4.0, vec![7.0, 5.0]).unwrap();
        let b = bernstein_dependent_bound(&m, 1e-4).unwrap();
        assert_eq!(b.bound_value, 1.0);
        assert!(b.raw_bound > 3.99);
        assert!(bernstein_dependent_bound(&m, -1.0).is_err());
    }

    #[test]
    fn invert_closed_form() {
        let l = invert_bound(|l| (1.0 / (l * l)).min(1.0), 0.04).unwrap();
        assert!((l - 5.0).abs() <= 5.0 * 2e-9, "{l}");
        // bracket grows downward too
        let l = invert_bound(|l| (1e-6 / (l * l)).min(1.0), 0.04).unwrap();
        assert!((l - 0.005).abs() <= 0.005 * 2e-9, "{l}");
    }

    #[test]
    fn invert_uninvertible() {
        let err = invert_bound(|_| 0.5, 0.05).unwrap_err();
        assert!(matches!(err, Error::Uninvertible { .. }));
        assert!(invert_bound(|_| 0.0, 0.05).is_err());
        assert!(invert_bound(|l| 1.0 / l, 1.5).is_err());
    }
}
