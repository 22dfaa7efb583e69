//! The shared-Gamma mixture against independent oracles: numerical
//! integration of the marginal, goodness of fit, cross-covariance and
//! conditional independence given the latent intensity.

use nbconc::distributions::{GammaMixture, NBParams};
use nbconc::simulation::{pearson, replicate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∫ exp(c u - d e^u) du` over the real line by the trapezoid rule in
/// `u = ln λ`, where the integrand is smooth and decays on both sides.
fn log_kernel_integral(c: f64, d: f64) -> f64 {
    let peak = (c / d).ln();
    let peak_value = c * peak - c;
    let (lo, hi) = (peak - 90.0 / c.min(1.0), peak + 6.0);
    let n = 60_000;
    let h = (hi - lo) / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let u = lo + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * (c * u - d * u.exp() - peak_value).exp();
    }
    acc * h * peak_value.exp()
}

/// `P(X = k)` for `X | Λ ~ Poisson(Λθ)`, `Λ ~ Gamma(α, β)`, integrating the
/// Poisson probability against the Gamma density. The Gamma normalizer is
/// integrated the same way, so no Gamma function is evaluated.
fn quadrature_pmf(alpha: f64, beta: f64, theta: f64, k: u64) -> f64 {
    let ln_k_factorial: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    let joint = log_kernel_integral(alpha + k as f64, beta + theta);
    let normalizer = log_kernel_integral(alpha, beta);
    (k as f64 * theta.ln() - ln_k_factorial).exp() * joint / normalizer
}

#[test]
fn marginal_pmf_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let alpha = rng.random_range(0.5..10.0);
        let beta = rng.random_range(0.2..5.0);
        let theta = rng.random_range(0.1..6.0);
        let nb = GammaMixture::new(alpha, beta, vec![theta])
            .unwrap()
            .marginal(0);
        assert!((nb.r() - alpha).abs() < 1e-15);
        assert!((nb.p() - beta / (beta + theta)).abs() < 1e-15);
        for k in 0..=50 {
            let want = quadrature_pmf(alpha, beta, theta, k);
            let got = nb.pmf(k);
            assert!(
                (got - want).abs() <= 1e-8,
                "k = {k}, (α, β, θ) = ({alpha}, {beta}, {theta}): {got} vs {want}"
            );
        }
    }
}

#[test]
fn quadrature_oracle_sanity() {
    // Gamma(2, 1): ∫ λ e^-λ dλ = 1
    assert!((log_kernel_integral(2.0, 1.0) - 1.0).abs() < 1e-12);
    // Γ(0.5) = sqrt(π)
    assert!((log_kernel_integral(0.5, 1.0) - std::f64::consts::PI.sqrt()).abs() < 1e-10);
}

/// Chi-square statistic of `draws` against `nb`, pooling the upper tail
/// once expected cell counts fall below 5. Returns (statistic, df).
fn chi_square(draws: &[u64], nb: &NBParams) -> (f64, usize) {
    let n = draws.len() as f64;
    let mut cells = Vec::new();
    let mut k = 0u64;
    let mut covered = 0.0;
    loop {
        let p = nb.pmf(k);
        if n * (1.0 - covered - p) < 5.0 {
            break;
        }
        cells.push((k, p));
        covered += p;
        k += 1;
    }
    let tail_start = k;
    let mut observed = vec![0usize; cells.len() + 1];
    for &x in draws {
        let idx = if x >= tail_start {
            cells.len()
        } else {
            x as usize
        };
        observed[idx] += 1;
    }
    let mut stat = 0.0;
    for (i, &(_, p)) in cells.iter().enumerate() {
        let e = n * p;
        stat += (observed[i] as f64 - e).powi(2) / e;
    }
    let e_tail = n * (1.0 - covered);
    stat += (observed[cells.len()] as f64 - e_tail).powi(2) / e_tail;
    (stat, cells.len())
}

#[test]
fn mixture_marginals_fit_nb() {
    let model = GammaMixture::new(2.5, 1.5, vec![0.7, 3.0, 9.0]).unwrap();
    let draws = replicate(22, 100_000, 0, |h| model.sample(&mut h.stream()).counts);
    for i in 0..model.len() {
        let column: Vec<u64> = draws.iter().map(|d| d[i]).collect();
        let (stat, df) = chi_square(&column, &model.marginal(i));
        // normal approximation to the chi-square upper tail, about 5 sigma
        let z = (stat - df as f64) / (2.0 * df as f64).sqrt();
        assert!(z < 5.0, "component {i}: chi-square {stat} on {df} df");
    }
}

#[test]
fn pairwise_correlation_matches_formula() {
    let model = GammaMixture::new(4.0, 4.0, vec![7.0, 5.0]).unwrap();
    // Var(Λ) θ1 θ2 / sqrt(Var X1 Var X2) with Var X = θ α/β + θ² α/β²
    let formula = 35.0f64.sqrt() / 99.0f64.sqrt();
    assert!((model.correlation(0, 1) - formula).abs() < 1e-12);

    let draws = replicate(23, 100_000, 0, |h| model.sample(&mut h.stream()).counts);
    let x1: Vec<f64> = draws.iter().map(|d| d[0] as f64).collect();
    let x2: Vec<f64> = draws.iter().map(|d| d[1] as f64).collect();
    let r = pearson(&x1, &x2).unwrap();
    assert!((r - formula).abs() < 0.01, "empirical {r} vs {formula}");
}

#[test]
fn conditionally_uncorrelated_given_intensity() {
    let model = GammaMixture::new(4.0, 4.0, vec![7.0, 5.0]).unwrap();
    let mut draws = replicate(24, 100_000, 0, |h| model.sample(&mut h.stream()));
    draws.sort_by(|a, b| a.lambda_draw.total_cmp(&b.lambda_draw));
    let theta = model.thetas();
    for decile in draws.chunks(draws.len() / 10) {
        let y1: Vec<f64> = decile
            .iter()
            .map(|d| d.counts[0] as f64 - d.lambda_draw * theta[0])
            .collect();
        let y2: Vec<f64> = decile
            .iter()
            .map(|d| d.counts[1] as f64 - d.lambda_draw * theta[1])
            .collect();
        let r = pearson(&y1, &y2).unwrap();
        assert!(r.abs() < 0.05, "within-decile correlation {r}");
    }
}

#[test]
fn gamma_intensity_moments() {
    let model = GammaMixture::new(3.0, 2.0, vec![1.0]).unwrap();
    let draws = replicate(25, 200_000, 0, |h| {
        model.sample(&mut h.stream()).lambda_draw
    });
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - model.lambda_mean()).abs() < 0.01);
    assert!((var / model.lambda_variance() - 1.0).abs() < 0.03);
}
