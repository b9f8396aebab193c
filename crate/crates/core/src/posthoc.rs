//! Least-squares means and pairwise Wald tests with Holm correction.
//!
//! Both are only reported for factors whose Type II test is significant;
//! the gate is checked against the ANOVA table of the same fit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anova::AnovaTable;
use crate::error::{Error, Result};
use crate::numstats::{chi2_sf, t_sf, FactorCoding, WlsFit};

/// Variance under which a contrast is treated as singular.
const SINGULAR_VAR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LsMeanMode {
    /// Prediction with every other factor at its reference level.
    #[default]
    ReferenceProfile,
    /// Average prediction over all combinations of the other factors'
    /// observed levels.
    EqualWeight,
}

impl FromStr for LsMeanMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "reference-profile" => Ok(LsMeanMode::ReferenceProfile),
            "equal-weight" => Ok(LsMeanMode::EqualWeight),
            other => Err(format!(
                "expected reference-profile or equal-weight, got `{other}`"
            )),
        }
    }
}

impl fmt::Display for LsMeanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LsMeanMode::ReferenceProfile => "reference-profile",
            LsMeanMode::EqualWeight => "equal-weight",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsMeanCell {
    pub factor: String,
    pub level: String,
    /// `None` when a coefficient involved is not estimable.
    pub adjusted_mean: Option<f64>,
    pub mode: LsMeanMode,
}

fn coding<'a>(fit: &'a WlsFit, factor: &str) -> Result<&'a FactorCoding> {
    fit.coding(factor)
        .ok_or_else(|| Error::FactorNotInModel(factor.to_string()))
}

/// Coefficient contributed by `level` (0 for the reference level).
fn level_effect(fit: &WlsFit, coding: &FactorCoding, level: &str) -> f64 {
    coding.column_of(level).map_or(0.0, |c| fit.beta[c])
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Adjusted mean of every observed level of `factor`, in declared order.
pub fn lsmeans(fit: &WlsFit, factor: &str, mode: LsMeanMode) -> Result<Vec<LsMeanCell>> {
    let target = coding(fit, factor)?;
    let intercept = fit.beta[0];
    // Average contribution of the other factors; 0 under the reference profile.
    let others: f64 = match mode {
        LsMeanMode::ReferenceProfile => 0.0,
        LsMeanMode::EqualWeight => fit
            .factors
            .iter()
            .filter(|c| c.name != factor)
            .map(|c| {
                // Under equal weighting over a Cartesian product the average
                // prediction is additive, so each factor contributes the mean
                // of its level effects.
                c.levels.iter().map(|l| level_effect(fit, c, l)).sum::<f64>() / c.levels.len() as f64
            })
            .sum(),
    };
    Ok(target
        .levels
        .iter()
        .map(|level| LsMeanCell {
            factor: factor.to_string(),
            level: level.clone(),
            adjusted_mean: finite(intercept + level_effect(fit, target, level) + others),
            mode,
        })
        .collect())
}

/// Whether the factor passes the ANOVA gate.
pub fn gate_open(gate: &AnovaTable, factor: &str) -> Result<bool> {
    let row = gate
        .row(factor)
        .ok_or_else(|| Error::FactorNotInModel(factor.to_string()))?;
    Ok(row.p_value.is_some_and(|p| p < gate.alpha))
}

/// LSMeans for a factor, or `None` when its ANOVA test is not significant.
pub fn gated_lsmeans(
    fit: &WlsFit,
    factor: &str,
    mode: LsMeanMode,
    gate: &AnovaTable,
) -> Result<Option<Vec<LsMeanCell>>> {
    if gate_open(gate, factor)? {
        lsmeans(fit, factor, mode).map(Some)
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaldDistribution {
    /// `W` against chi-square with one degree of freedom.
    #[default]
    ChiSquare1,
    /// Signed `√W` against Student t with the residual degrees of freedom.
    StudentT,
}

impl FromStr for WaldDistribution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "chi2" | "chi-square1" => Ok(WaldDistribution::ChiSquare1),
            "t" | "student-t" => Ok(WaldDistribution::StudentT),
            other => Err(format!("expected chi2 or t, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldContrast {
    pub estimate: f64,
    pub variance: f64,
    pub wald_stat: f64,
    pub p_value: f64,
}

/// Wald test of `β_a − β_b` for two levels of `factor`.
pub fn wald_contrast(
    fit: &WlsFit,
    factor: &str,
    level_a: &str,
    level_b: &str,
    dist: WaldDistribution,
) -> Result<WaldContrast> {
    let c = coding(fit, factor)?;
    for level in [level_a, level_b] {
        if !c.levels.iter().any(|l| l == level) {
            return Err(Error::NotEstimable {
                factor: factor.to_string(),
                level: level.to_string(),
            });
        }
    }
    if level_a == level_b {
        return Ok(WaldContrast {
            estimate: 0.0,
            variance: 0.0,
            wald_stat: 0.0,
            p_value: 1.0,
        });
    }
    let cov = fit.cov_beta.as_ref().ok_or(Error::ZeroResidualDf {
        n: fit.n_obs,
        rank: fit.rank,
    })?;
    let (ca, cb) = (c.column_of(level_a), c.column_of(level_b));
    let beta = |col: Option<usize>| col.map_or(0.0, |j| fit.beta[j]);
    let var_of = |i: Option<usize>, j: Option<usize>| match (i, j) {
        (Some(i), Some(j)) => cov[i][j],
        _ => 0.0,
    };
    let estimate = beta(ca) - beta(cb);
    let variance = var_of(ca, ca) + var_of(cb, cb) - 2.0 * var_of(ca, cb);
    for (level, col) in [(level_a, ca), (level_b, cb)] {
        if col.is_some_and(|j| fit.beta[j].is_nan()) {
            return Err(Error::NotEstimable {
                factor: factor.to_string(),
                level: level.to_string(),
            });
        }
    }
    if variance.is_nan() || variance <= SINGULAR_VAR {
        return Err(Error::SingularContrastVariance {
            factor: factor.to_string(),
            level_a: level_a.to_string(),
            level_b: level_b.to_string(),
            variance,
        });
    }
    let wald_stat = estimate * estimate / variance;
    let p_value = match dist {
        WaldDistribution::ChiSquare1 => chi2_sf(wald_stat, 1.0)?,
        WaldDistribution::StudentT => 2.0 * t_sf(wald_stat.sqrt(), fit.df_resid as f64)?,
    };
    Ok(WaldContrast {
        estimate,
        variance,
        wald_stat,
        p_value: p_value.min(1.0),
    })
}

/// Holm step-down adjustment over a family of `m` tests, of which `raw`
/// are the observed p-values. Output follows input order.
pub fn holm_correct(raw: &[f64], m: usize) -> Result<Vec<f64>> {
    if let Some(bad) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidP(format!("p-value {bad} outside [0, 1]")));
    }
    if m < raw.len() {
        return Err(Error::InvalidP(format!(
            "family size {m} smaller than the {} p-values given",
            raw.len()
        )));
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; raw.len()];
    let mut running = 0.0_f64;
    for (i, &idx) in order.iter().enumerate() {
        let candidate = ((m - i) as f64 * raw[idx]).min(1.0);
        running = running.max(candidate);
        out[idx] = running;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocRow {
    pub factor: String,
    pub level_a: String,
    pub level_b: String,
    pub wald_stat: f64,
    pub raw_p: f64,
    pub holm_p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosthocResult {
    pub factor: String,
    pub rows: Vec<PosthocRow>,
    /// Set when the factor did not pass the ANOVA gate.
    pub skipped: Option<String>,
}

/// All pairwise level comparisons of `factor`, Holm-corrected within the
/// factor. Pairs follow declared level order (`a` before `b`).
pub fn pairwise_wald(
    fit: &WlsFit,
    factor: &str,
    alpha: f64,
    gate: &AnovaTable,
    dist: WaldDistribution,
) -> Result<PosthocResult> {
    crate::anova::check_alpha(alpha)?;
    if !gate_open(gate, factor)? {
        return Ok(PosthocResult {
            factor: factor.to_string(),
            rows: Vec::new(),
            skipped: Some("ANOVA not significant".into()),
        });
    }
    let levels = &coding(fit, factor)?.levels;
    let mut pairs = Vec::new();
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            let w = wald_contrast(fit, factor, &levels[i], &levels[j], dist)?;
            pairs.push((i, j, w));
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|(_, _, w)| w.p_value).collect();
    let holm = holm_correct(&raw, raw.len())?;
    let rows = pairs
        .into_iter()
        .zip(holm)
        .map(|((i, j, w), holm_p)| PosthocRow {
            factor: factor.to_string(),
            level_a: levels[i].clone(),
            level_b: levels[j].clone(),
            wald_stat: w.wald_stat,
            raw_p: w.p_value,
            holm_p,
            significant: holm_p < alpha,
        })
        .collect();
    Ok(PosthocResult {
        factor: factor.to_string(),
        rows,
        skipped: None,
    })
}
