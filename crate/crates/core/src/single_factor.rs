//! Single-factor tests on group-level accuracies: a weighted Welch t-test for
//! binary attributes and a weighted one-way ANOVA otherwise.
//!
//! The Welch statistic uses weighted means `X̄_k = Σ w a / W_k`, weighted
//! variances `σ̂²_k = Σ w (a − X̄_k)² / W_k` and
//!
//! ```text
//! t = (X̄₁ − X̄₂) / √(σ̂₁²/W₁ + σ̂₂²/W₂)
//! ν = (σ̂₁²/W₁ + σ̂₂²/W₂)² / ((σ̂₁²/W₁)²/(n₁−1) + (σ̂₂²/W₂)²/(n₂−1))
//! ```
//!
//! where `n_k` counts observations (group rows), not weight.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::anova::{type2_anova_design, AnovaRow};
use crate::error::{Error, Result};
use crate::model::{Attribute, AttributeSchema, GroupTable};
use crate::numstats::{t_sf, wls_fit, DesignMatrix, Observation};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WelchOptions {
    /// Use `Σw − 1` instead of `Σw` in the weighted variances.
    pub bias_corrected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t_stat: f64,
    pub df_approx: f64,
    pub p_two_sided: f64,
    pub group_means: (f64, f64),
    pub group_weighted_vars: (f64, f64),
    pub total_weights: (f64, f64),
    pub counts: (usize, usize),
    /// Set when the statistic was fixed by convention rather than computed.
    pub note: Option<String>,
}

struct Moments {
    mean: f64,
    var: f64,
    total: f64,
    n: usize,
}

fn moments(label: &str, group: &[(f64, f64)], opts: WelchOptions) -> Result<Moments> {
    if group.len() < 2 {
        return Err(Error::TooFewObservations {
            group: label.to_string(),
            count: group.len(),
        });
    }
    if let Some(&(_, w)) = group.iter().find(|(_, w)| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidConfig(format!(
            "weight {w} in group `{label}` must be positive"
        )));
    }
    let total: f64 = group.iter().map(|(_, w)| w).sum();
    let mean = group.iter().map(|(a, w)| a * w).sum::<f64>() / total;
    let ss: f64 = group.iter().map(|(a, w)| w * (a - mean) * (a - mean)).sum();
    let denom = if opts.bias_corrected { total - 1.0 } else { total };
    Ok(Moments {
        mean,
        var: ss / denom,
        total,
        n: group.len(),
    })
}

/// Weighted Welch two-sample test on `(value, weight)` pairs.
pub fn weighted_welch_t(
    group1: &[(f64, f64)],
    group2: &[(f64, f64)],
    opts: WelchOptions,
) -> Result<WelchResult> {
    let g1 = moments("group1", group1, opts)?;
    let g2 = moments("group2", group2, opts)?;
    let (s1, s2) = (g1.var / g1.total, g2.var / g2.total);
    let se2 = s1 + s2;
    let diff = g1.mean - g2.mean;

    let mut note = None;
    let (t_stat, df_approx, p) = if se2 > 0.0 {
        let t = diff / se2.sqrt();
        let nu = se2 * se2 / (s1 * s1 / (g1.n - 1) as f64 + s2 * s2 / (g2.n - 1) as f64);
        (t, nu, (2.0 * t_sf(t.abs(), nu)?).min(1.0))
    } else {
        // Both weighted variances vanish: ν is 0/0. Report the pooled count
        // degrees of freedom and fix t and p by convention.
        let nu = (g1.n + g2.n - 2) as f64;
        if diff == 0.0 {
            note = Some("zero variance in both groups with equal means; t = 0, p = 1".into());
            (0.0, nu, 1.0)
        } else {
            note = Some("zero variance in both groups with different means; p = 0".into());
            (diff.signum() * f64::INFINITY, nu, 0.0)
        }
    };
    Ok(WelchResult {
        t_stat,
        df_approx,
        p_two_sided: p,
        group_means: (g1.mean, g2.mean),
        group_weighted_vars: (g1.var, g2.var),
        total_weights: (g1.total, g2.total),
        counts: (g1.n, g2.n),
        note,
    })
}

/// Weighted one-way ANOVA computed as a one-factor WLS fit plus its Type II
/// test. Levels are taken in map order.
pub fn weighted_oneway_anova(groups: &BTreeMap<String, Vec<(f64, f64)>>, alpha: f64) -> Result<AnovaRow> {
    let present: Vec<&str> = groups
        .iter()
        .filter(|(_, v)| !v.is_empty())
        .map(|(k, _)| k.as_str())
        .collect();
    if present.len() < 2 {
        return Err(Error::DegenerateFactor {
            factor: "group".into(),
            observed: present.len(),
        });
    }
    let attr = Attribute::with_default_reference("group", &present);
    let schema = AttributeSchema::new(vec![attr])?;
    let observations: Vec<Observation> = groups
        .iter()
        .flat_map(|(level, values)| {
            values.iter().map(move |&(response, weight)| Observation {
                levels: vec![level.clone()],
                weight,
                response,
            })
        })
        .collect();
    oneway_from_observations(&schema, "group", &observations, alpha)
}

fn oneway_from_observations(
    schema: &AttributeSchema,
    factor: &str,
    observations: &[Observation],
    alpha: f64,
) -> Result<AnovaRow> {
    let design = DesignMatrix::from_observations(schema, &[factor.to_string()], observations, &[factor])?;
    if design.coding(factor).is_none() {
        return Err(Error::DegenerateFactor {
            factor: factor.to_string(),
            observed: design.factors.len(),
        });
    }
    let fit = wls_fit(&design)?;
    let table = type2_anova_design(&design, &fit, &[factor], alpha)?;
    Ok(table.rows.into_iter().next().expect("one factor row"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "kebab-case")]
pub enum SingleFactorResult {
    Welch {
        factor: String,
        level_1: String,
        level_2: String,
        #[serde(flatten)]
        result: WelchResult,
    },
    OnewayAnova {
        factor: String,
        #[serde(flatten)]
        row: AnovaRow,
    },
}

/// Marginal test of `factor` on a group table: the Welch test when the
/// attribute declares two levels, one-way ANOVA otherwise. Rows are
/// collapsed over the other factors by keeping each group row as one
/// observation.
pub fn single_factor_test(
    table: &GroupTable,
    factor: &str,
    schema: &AttributeSchema,
    alpha: f64,
    opts: WelchOptions,
) -> Result<SingleFactorResult> {
    let attr = schema
        .attribute(factor)
        .ok_or_else(|| Error::UnknownFactor(factor.to_string()))?;
    let slot = table
        .factors
        .iter()
        .position(|f| f == factor)
        .ok_or_else(|| Error::UnknownFactor(factor.to_string()))?;

    if attr.levels.len() == 2 {
        let pick = |level: &str| -> Vec<(f64, f64)> {
            table
                .rows
                .iter()
                .filter(|r| r.levels[slot] == level)
                .map(|r| (r.accuracy, r.weight as f64))
                .collect()
        };
        let (l1, l2) = (&attr.levels[0], &attr.levels[1]);
        let result = weighted_welch_t(&pick(l1), &pick(l2), opts)?;
        return Ok(SingleFactorResult::Welch {
            factor: factor.to_string(),
            level_1: l1.clone(),
            level_2: l2.clone(),
            result,
        });
    }

    let observations: Vec<Observation> = table
        .rows
        .iter()
        .map(|r| Observation {
            levels: vec![r.levels[slot].clone()],
            weight: r.weight as f64,
            response: r.accuracy,
        })
        .collect();
    let sub = AttributeSchema::new(vec![attr.clone()])?;
    let row = oneway_from_observations(&sub, factor, &observations, alpha)?;
    Ok(SingleFactorResult::OnewayAnova {
        factor: factor.to_string(),
        row,
    })
}
