use anyhow::Result;
use clap::{Args, Subcommand};
use nbconc::bounds::{chernoff_mean_deviation_bound, BoundResult, MaximalBound};
use nbconc::distributions::GammaMixture;
use serde::Serialize;

use crate::input;
use crate::output::{self, Format};

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Debug, Subcommand)]
enum Kind {
    /// Chernoff bound on P(mean - E[mean] >= a) for independent NB variables.
    Chernoff {
        /// `r:p` pairs separated by commas, `@design`, or `@FILE`.
        #[arg(long)]
        params: String,
        #[arg(long, allow_negative_numbers = true)]
        a: f64,
    },
    /// Kolmogorov maximal bound for independent NB variables.
    KolmogorovIndep {
        /// `r:p` pairs separated by commas, `@design`, or `@FILE`.
        #[arg(long)]
        params: String,
        #[command(flatten)]
        at: At,
    },
    /// Kolmogorov maximal bound under a Gamma-mixed Poisson model.
    KolmogorovDep(MixtureArgs),
    /// Bernstein maximal bound under a Gamma-mixed Poisson model.
    Bernstein(MixtureArgs),
}

/// Evaluate at a threshold, or invert the bound at a level.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct At {
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Find the smallest threshold whose bound is at most this level.
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct MixtureArgs {
    /// Gamma shape of the shared intensity.
    #[arg(long, allow_negative_numbers = true)]
    shape: f64,
    /// Gamma rate of the shared intensity.
    #[arg(long, allow_negative_numbers = true)]
    rate: f64,
    /// Loadings separated by commas, `@design`, or `@FILE`.
    #[arg(long)]
    thetas: String,
    #[command(flatten)]
    at: At,
}

/// Flattened form of a bound result, for delimited output.
#[derive(Serialize)]
struct Row {
    threshold: f64,
    bound_value: f64,
    raw_bound: f64,
    cond_term: Option<f64>,
    mix_term: Option<f64>,
    t_star: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
}

impl From<&BoundResult> for Row {
    fn from(b: &BoundResult) -> Self {
        Self {
            threshold: b.threshold,
            bound_value: b.bound_value,
            raw_bound: b.raw_bound,
            cond_term: b.components.map(|c| c.cond_term),
            mix_term: b.components.map(|c| c.mix_term),
            t_star: b.optimizer.map(|o| o.t_star),
            iterations: b.optimizer.map(|o| o.iterations),
            converged: b.optimizer.map(|o| o.converged),
        }
    }
}

fn maximal(bound: MaximalBound<'_>, at: &At) -> Result<BoundResult> {
    let lambda = match (at.lambda, at.alpha) {
        (Some(l), _) => l,
        (None, Some(a)) => bound.threshold(a)?,
        (None, None) => unreachable!("clap enforces one of --lambda/--alpha"),
    };
    Ok(bound.evaluate(lambda)?)
}

fn mixture(args: &MixtureArgs) -> Result<GammaMixture> {
    Ok(GammaMixture::new(
        args.shape,
        args.rate,
        input::thetas(&args.thetas)?,
    )?)
}

pub fn run(args: &BoundArgs, format: Format) -> Result<()> {
    let result = match &args.kind {
        Kind::Chernoff { params, a } => {
            chernoff_mean_deviation_bound(&input::nb_list(params)?, *a)?
        }
        Kind::KolmogorovIndep { params, at } => {
            let params = input::nb_list(params)?;
            maximal(MaximalBound::KolmogorovIndependent(&params), at)?
        }
        Kind::KolmogorovDep(m) => {
            let model = mixture(m)?;
            maximal(MaximalBound::KolmogorovDependent(&model), &m.at)?
        }
        Kind::Bernstein(m) => {
            let model = mixture(m)?;
            maximal(MaximalBound::BernsteinDependent(&model), &m.at)?
        }
    };
    let text = match format {
        Format::Object => output::object_string(&result)?,
        Format::Delimited => output::delimited_string(&[Row::from(&result)])?,
    };
    output::emit(&text)
}
