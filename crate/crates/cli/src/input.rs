//! Parsing of parameter lists, scenario files and count tables.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nbconc::distributions::{NB2Params, NBParams};
use nbconc::simulation::MomentMatchedDesign;
use nbconc::surveillance::{EpiScenario, Region};
use serde::Deserialize;

/// Keyword selecting the built-in 20-variable moment-matched design.
pub const DESIGN: &str = "@design";

/// Expands `@path` to the file's contents; other values pass through.
fn expand(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).with_context(|| format!("reading {path}")),
        None => Ok(arg.to_string()),
    }
}

fn items(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
}

fn pair(item: &str) -> Result<(f64, f64)> {
    let (a, b) = item
        .split_once(':')
        .ok_or_else(|| anyhow!("expected `a:b`, got `{item}`"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

/// `r:p` pairs, `@design`, or `@file` holding such pairs.
pub fn nb_list(arg: &str) -> Result<Vec<NBParams>> {
    if arg == DESIGN {
        return Ok(MomentMatchedDesign::reference().independent);
    }
    let text = expand(arg)?;
    let out = items(&text)
        .map(|item| {
            let (r, p) = pair(item)?;
            Ok(NBParams::new(r, p)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        bail!("domain-error: parameter list must not be empty");
    }
    Ok(out)
}

/// `mu:kappa` pairs or `@file` holding them.
pub fn nb2_list(arg: &str) -> Result<Vec<NB2Params>> {
    let text = expand(arg)?;
    let out = items(&text)
        .map(|item| {
            let (mu, kappa) = pair(item)?;
            Ok(NB2Params::new(mu, kappa)?)
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        bail!("domain-error: parameter list must not be empty");
    }
    Ok(out)
}

/// Mixture loadings; `@design` yields the design's marginal means.
pub fn thetas(arg: &str) -> Result<Vec<f64>> {
    if arg == DESIGN {
        return Ok(MomentMatchedDesign::reference().mixture.thetas().to_vec());
    }
    let text = expand(arg)?;
    items(&text)
        .map(|s| {
            s.parse::<f64>()
                .with_context(|| format!("bad loading `{s}`"))
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    weeks: usize,
    #[serde(default)]
    alpha_levels: Vec<f64>,
    #[serde(default)]
    regions: Vec<Region>,
}

pub struct Scenario {
    pub scenario: EpiScenario,
    pub alpha_levels: Vec<f64>,
}

pub fn scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ScenarioFile =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Scenario {
        scenario: EpiScenario::new(file.regions, file.weeks)?,
        alpha_levels: file.alpha_levels,
    })
}

/// Weekly count table: header of region names (any order), one row per
/// week. Rows are returned in scenario region order.
pub fn counts(path: &Path, scenario: &EpiScenario) -> Result<Vec<Vec<u64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let header = reader.headers()?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let columns = scenario
        .regions()
        .iter()
        .map(|r| {
            index
                .get(r.name.as_str())
                .copied()
                .ok_or_else(|| anyhow!("counts header lacks region `{}`", r.name))
        })
        .collect::<Result<Vec<_>>>()?;
    if header.len() != columns.len() {
        bail!(
            "counts header has {} columns, scenario has {} regions",
            header.len(),
            columns.len()
        );
    }

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.with_context(|| format!("line {line}: unreadable row"))?;
        if record.len() != header.len() {
            bail!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            );
        }
        let row = columns
            .iter()
            .map(|&c| {
                record[c].parse::<u64>().map_err(|_| {
                    anyhow!(
                        "line {line}: `{}` is not a nonnegative integer count",
                        &record[c]
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}
