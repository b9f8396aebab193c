//! Nonparametric bootstrap of the WLS coefficients.
//!
//! Decisions are sorted by `(text_id, detector_id)` and replicate `r`
//! resamples them with replacement using `substream(seed, r)`. Each
//! replicate is re-aggregated and refitted with the original column set.
//! A coefficient fails in a replicate when its level (or its factor's
//! reference level) is absent or the coefficient is not estimable; failed
//! values are excluded from that coefficient's summary and counted.
//!
//! Percentiles interpolate linearly between order statistics at the
//! zero-based rank `q·(n − 1)`.

use std::collections::HashMap;
use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{aggregate_groups, AttributeSchema, DecisionRecord};
use crate::numstats::design::build_design;
use crate::numstats::{wls_fit, DesignMatrix, Estimability, Observation};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coverage {
    #[serde(rename = "WITHIN CI")]
    WithinCi,
    #[serde(rename = "OUTSIDE CI")]
    OutsideCi,
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Coverage::WithinCi => "WITHIN CI",
            Coverage::OutsideCi => "OUTSIDE CI",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub original_value: f64,
    pub boot_mean: f64,
    pub boot_std: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub coverage: Coverage,
    pub n_success: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub replicates: usize,
    pub seed: u64,
    pub n_decisions: usize,
    /// Replicates in which at least one coefficient failed.
    pub n_failed_refits: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Coefficients left out because they are not estimable on the full data.
    pub excluded: Vec<String>,
}

impl BootstrapReport {
    pub fn parameter(&self, label: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.parameter == label)
    }
}

pub fn percentile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::EmptyInput {
            context: "percentile",
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidConfig(format!("quantile {q} outside [0, 1]")));
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    })
}

/// Bootstraps the main-effects WLS fit over `factors`.
pub fn bootstrap_wls<S: AsRef<str>>(
    decisions: &[DecisionRecord],
    factors: &[S],
    schema: &AttributeSchema,
    config: BootstrapConfig,
) -> Result<BootstrapReport> {
    if config.replicates == 0 {
        return Err(Error::InvalidConfig("bootstrap needs at least one replicate".into()));
    }
    let mut sorted: Vec<&DecisionRecord> = decisions.iter().collect();
    sorted.sort_by(|a, b| (&a.text_id, &a.detector_id).cmp(&(&b.text_id, &b.detector_id)));

    let table = aggregate_groups(decisions, schema, factors)?;
    let design = build_design(&table, factors, schema)?;
    let base = wls_fit(&design)?;

    // Cell of every sorted decision, indexing the rows of `table`.
    let cell_of: HashMap<&[String], usize> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.levels.as_slice(), i))
        .collect();
    let cells: Vec<(usize, bool)> = sorted
        .iter()
        .map(|d| {
            let key: Vec<String> = table
                .factors
                .iter()
                .map(|f| d.attributes.get(f).cloned().unwrap_or_default())
                .collect();
            (cell_of[key.as_slice()], d.correct)
        })
        .collect();

    let estimable: Vec<usize> = (0..base.columns.len())
        .filter(|&j| base.estimability[j] != Estimability::Unestimable)
        .collect();
    let excluded = (0..base.columns.len())
        .filter(|j| !estimable.contains(j))
        .map(|j| base.columns[j].label.clone())
        .collect();

    let n = cells.len();
    let n_cells = table.rows.len();
    let replicate = |r: usize| -> Vec<Option<f64>> {
        let mut rng = substream(config.seed, r as u64);
        let mut counts = vec![(0u64, 0u64); n_cells];
        for _ in 0..n {
            let (cell, correct) = cells[rng.random_range(0..n)];
            counts[cell].0 += 1;
            counts[cell].1 += u64::from(correct);
        }
        refit(&design, &table.factors, &table.rows, &counts, &estimable)
    };
    let draws: Vec<Vec<Option<f64>>> = (0..config.replicates).into_par_iter().map(replicate).collect();

    let n_failed_refits = draws.iter().filter(|d| d.iter().any(Option::is_none)).count();
    let parameters = estimable
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let label = &base.columns[j].label;
            let mut values: Vec<f64> = draws.iter().filter_map(|d| d[k]).collect();
            if values.is_empty() {
                return Err(Error::NoSuccessfulReplicates(label.clone()));
            }
            let m = values.len();
            let mean = values.iter().sum::<f64>() / m as f64;
            let std = if m > 1 {
                (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64).sqrt()
            } else {
                0.0
            };
            values.sort_by(f64::total_cmp);
            let ci_lower = percentile(&values, 0.025)?;
            let ci_upper = percentile(&values, 0.975)?;
            let original_value = base.beta[j];
            let coverage = if ci_lower <= original_value && original_value <= ci_upper {
                Coverage::WithinCi
            } else {
                Coverage::OutsideCi
            };
            Ok(ParameterSummary {
                parameter: label.clone(),
                original_value,
                boot_mean: mean.clamp(values[0], values[m - 1]),
                boot_std: std,
                ci_lower,
                ci_upper,
                coverage,
                n_success: m,
                n_failed: config.replicates - m,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(BootstrapReport {
        replicates: config.replicates,
        seed: config.seed,
        n_decisions: n,
        n_failed_refits,
        parameters,
        excluded,
    })
}

/// Refits one replicate with the original codings. Returns one entry per
/// column in `estimable`; `None` marks a failed coefficient.
fn refit(
    design: &DesignMatrix,
    factor_names: &[String],
    rows: &[crate::model::GroupRow],
    counts: &[(u64, u64)],
    estimable: &[usize],
) -> Vec<Option<f64>> {
    let observations: Vec<Observation> = rows
        .iter()
        .zip(counts)
        .filter(|(_, c)| c.0 > 0)
        .map(|(row, &(w, hits))| Observation {
            levels: row.levels.clone(),
            weight: w as f64,
            response: hits as f64 / w as f64,
        })
        .collect();

    let mut failed = vec![false; design.n_cols()];
    for coding in &design.factors {
        let slot = factor_names
            .iter()
            .position(|f| *f == coding.name)
            .expect("coding factor present in table");
        let present = |level: &str| observations.iter().any(|o| o.levels[slot] == level);
        if !present(&coding.reference) {
            // Without the reference level the intercept is re-based too.
            failed[0] = true;
            for &(_, c) in &coding.columns {
                failed[c] = true;
            }
        } else {
            for (level, c) in &coding.columns {
                if !present(level) {
                    failed[*c] = true;
                }
            }
        }
    }

    let fit = DesignMatrix::assemble(design.factors.clone(), factor_names, &observations)
        .and_then(|d| wls_fit(&d));
    match fit {
        Ok(fit) => estimable
            .iter()
            .map(|&j| (!failed[j] && fit.beta[j].is_finite()).then_some(fit.beta[j]))
            .collect(),
        Err(_) => vec![None; estimable.len()],
    }
}
