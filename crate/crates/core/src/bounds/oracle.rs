//! Exact tail probabilities for small independent NB instances.
//!
//! Each marginal is truncated where its remaining mass drops below
//! [`ORACLE_TAIL_MASS`]; the returned value is exact on the truncated support
//! and the discarded mass is reported as `truncation_error`, so the true
//! probability lies in `[probability, probability + truncation_error]`.

use serde::Serialize;

use crate::distributions::NBParams;
use crate::error::{check_positive, domain, Error, Result};

pub const ORACLE_TAIL_MASS: f64 = 1e-12;
/// Largest admissible product of truncated support sizes.
pub const ORACLE_STATE_LIMIT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub probability: f64,
    pub truncation_error: f64,
}

struct Truncated {
    tables: Vec<Vec<f64>>,
    lost: f64,
}

fn truncate(params: &[NBParams]) -> Result<Truncated> {
    if params.is_empty() {
        return Err(domain("parameter list must not be empty"));
    }
    let mut tables = Vec::with_capacity(params.len());
    let mut lost = 0.0;
    let mut states = 1.0f64;
    for nb in params {
        let (table, tail) = nb.truncated_support(ORACLE_TAIL_MASS);
        states *= table.len() as f64;
        if states > ORACLE_STATE_LIMIT {
            return Err(Error::OracleInfeasible {
                states,
                limit: ORACLE_STATE_LIMIT,
            });
        }
        lost += tail;
        tables.push(table);
    }
    Ok(Truncated { tables, lost })
}

fn convolve(dist: &[f64], pmf: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; dist.len() + pmf.len() - 1];
    for (s, &ps) in dist.iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        for (x, &px) in pmf.iter().enumerate() {
            out[s + x] += ps * px;
        }
    }
    out
}

/// `P(max_k |S_k| >= λ)` for `S_k = sum_{i<=k} (X_i - E X_i)`.
///
/// The joint truncated support is swept variable by variable, carrying the
/// probability of every partial-sum value whose path has not yet reached
/// the boundary; mass that reaches it is absorbed.
pub fn exact_max_deviation_tail_oracle(params: &[NBParams], lambda: f64) -> Result<OracleValue> {
    check_positive("lambda", lambda)?;
    let trunc = truncate(params)?;
    let mut alive = vec![1.0];
    let mut absorbed = 0.0;
    let mut centre = 0.0;
    for (nb, table) in params.iter().zip(&trunc.tables) {
        alive = convolve(&alive, table);
        centre += nb.mean();
        for (s, mass) in alive.iter_mut().enumerate() {
            if (s as f64 - centre).abs() >= lambda {
                absorbed += *mass;
                *mass = 0.0;
            }
        }
    }
    Ok(OracleValue {
        probability: absorbed.min(1.0),
        truncation_error: trunc.lost,
    })
}

/// `P(mean(X) - E[mean(X)] >= a)`, by convolving the truncated marginals.
pub fn exact_mean_deviation_tail(params: &[NBParams], a: f64) -> Result<OracleValue> {
    check_positive("a", a)?;
    let trunc = truncate(params)?;
    let dist = trunc
        .tables
        .iter()
        .fold(vec![1.0], |acc, table| convolve(&acc, table));
    let n = params.len() as f64;
    let cut = params.iter().map(NBParams::mean).sum::<f64>() + n * a;
    let probability = dist
        .iter()
        .enumerate()
        .filter(|(s, _)| *s as f64 >= cut)
        .map(|(_, p)| p)
        .sum::<f64>();
    Ok(OracleValue {
        probability: probability.min(1.0),
        truncation_error: trunc.lost,
    })
}
