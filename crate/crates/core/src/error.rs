use thiserror::Error;

/// Errors raised by the toolkit. The `Display` text starts with a stable
/// kebab-case tag so that callers (and the CLI) can match on it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain-error: {0}")]
    Domain(String),

    #[error("poisson-limit-not-representable: kappa = 0 has no (r, p) form")]
    PoissonLimitNotRepresentable,

    #[error("mgf-domain-exceeded: t = {t} must be below -ln(1 - p) = {t_max}")]
    MgfDomainExceeded { t: f64, t_max: f64 },

    #[error("uninvertible: bound stays above {alpha} for every threshold up to {limit:e}")]
    Uninvertible { alpha: f64, limit: f64 },

    #[error("oracle-infeasible: truncated joint support has {states} states (limit {limit})")]
    OracleInfeasible { states: f64, limit: f64 },

    #[error("zero-variance: correlation undefined for constant input")]
    ZeroVariance,

    #[error("missing-lambda-draw: sample {0} carries no mixing draw")]
    MissingLambdaDraw(usize),

    #[error("length-mismatch: expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("horizon-exceeded: monitoring horizon of {0} periods already reached")]
    HorizonExceeded(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

/// Rejects non-finite or nonpositive values.
pub(crate) fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(domain(format!(
            "{name} must be finite and > 0, got {value}"
        )))
    }
}

pub(crate) fn check_open_unit(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("{name} must lie in (0, 1), got {value}")))
    }
}
