//! Weighted least squares via Householder QR of the weight-scaled system.
//!
//! Columns are processed in design order. A column whose component
//! orthogonal to the columns already kept is negligible is aliased: it is
//! dropped from estimation and reported. When the aliased column is an exact
//! copy of a kept column it inherits that column's coefficient and
//! covariance; otherwise its coefficient is `NaN` (unestimable).

use serde::{Deserialize, Serialize};

use super::design::{ColumnInfo, DesignMatrix, FactorCoding};
use crate::error::{Error, Result};

/// Relative residual norm under which a column counts as linearly dependent.
const ALIAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimability {
    Estimated,
    /// Exact copy of the given (estimated) column.
    DuplicateOf(usize),
    Unestimable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WlsFit {
    pub columns: Vec<ColumnInfo>,
    pub factors: Vec<FactorCoding>,
    #[serde(with = "nan_vec")]
    pub beta: Vec<f64>,
    /// `sigma2 · (XᵀWX)⁻¹` on the estimable columns; `None` when the residual
    /// degrees of freedom are zero.
    #[serde(with = "nan_matrix")]
    pub cov_beta: Option<Vec<Vec<f64>>>,
    pub estimability: Vec<Estimability>,
    pub aliased_columns: Vec<String>,
    pub rss_weighted: f64,
    pub n_obs: usize,
    pub rank: usize,
    pub df_resid: usize,
    pub sigma2: Option<f64>,
    pub fitted: Vec<f64>,
}

impl WlsFit {
    pub fn coding(&self, factor: &str) -> Option<&FactorCoding> {
        self.factors.iter().find(|f| f.name == factor)
    }

    pub fn column_index(&self, label: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.label == label)
    }
}

struct Reflector {
    start: usize,
    v: Vec<f64>,
    scale: f64,
}

impl Reflector {
    fn apply(&self, y: &mut [f64]) {
        let tail = &mut y[self.start..];
        let dot: f64 = self.v.iter().zip(tail.iter()).map(|(a, b)| a * b).sum();
        let s = self.scale * dot;
        for (t, v) in tail.iter_mut().zip(&self.v) {
            *t -= s * v;
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Fits `min_β Σ w_i (a_i - x_iᵀβ)²`.
pub fn wls_fit(design: &DesignMatrix) -> Result<WlsFit> {
    let n = design.n_rows();
    let p = design.n_cols();
    if n == 0 {
        return Err(Error::EmptyInput { context: "wls_fit" });
    }
    if let Some(w) = design.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidConfig(format!("weight {w} must be positive and finite")));
    }
    if design.response.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidConfig("response must be finite".into()));
    }

    let sw: Vec<f64> = design.weights.iter().map(|w| w.sqrt()).collect();
    let mut reflectors: Vec<Reflector> = Vec::new();
    // r_cols[k] holds column k of R (length k + 1) for the k-th kept column.
    let mut r_cols: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    let mut estimability = vec![Estimability::Unestimable; p];

    for j in 0..p {
        let mut col: Vec<f64> = design.x[j].iter().zip(&sw).map(|(x, s)| x * s).collect();
        let norm0 = norm(&col);
        for h in &reflectors {
            h.apply(&mut col);
        }
        let k = kept.len();
        let tail = if k < n { norm(&col[k..]) } else { 0.0 };
        if norm0 == 0.0 || tail <= ALIAS_TOL * norm0 {
            continue;
        }
        let alpha = if col[k] > 0.0 { -tail } else { tail };
        let mut v = col[k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        reflectors.push(Reflector {
            start: k,
            v,
            scale: 2.0 / vv,
        });
        let mut r = col[..k].to_vec();
        r.push(alpha);
        r_cols.push(r);
        kept.push(j);
        estimability[j] = Estimability::Estimated;
    }
    let rank = kept.len();

    let mut qty: Vec<f64> = design.response.iter().zip(&sw).map(|(a, s)| a * s).collect();
    for h in &reflectors {
        h.apply(&mut qty);
    }
    // Back substitution R b = Qᵀy.
    let mut b = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut s = qty[i];
        for c in i + 1..rank {
            s -= r_cols[c][i] * b[c];
        }
        b[i] = s / r_cols[i][i];
    }

    let mut beta = vec![f64::NAN; p];
    for (&j, &bj) in kept.iter().zip(&b) {
        beta[j] = bj;
    }
    for j in 0..p {
        if estimability[j] == Estimability::Estimated {
            continue;
        }
        if let Some(&src) = kept.iter().find(|&&k| design.x[k] == design.x[j]) {
            estimability[j] = Estimability::DuplicateOf(src);
            beta[j] = beta[src];
        }
    }
    let aliased_columns = (0..p)
        .filter(|&j| estimability[j] != Estimability::Estimated)
        .map(|j| design.columns[j].label.clone())
        .collect();

    let fitted: Vec<f64> = (0..n)
        .map(|i| kept.iter().map(|&j| design.x[j][i] * beta[j]).sum())
        .collect();
    let rss_weighted: f64 = design
        .response
        .iter()
        .zip(&fitted)
        .zip(&design.weights)
        .map(|((a, f), w)| w * (a - f) * (a - f))
        .sum();

    let df_resid = n - rank;
    let sigma2 = (df_resid > 0).then(|| rss_weighted / df_resid as f64);
    let cov_beta = sigma2.map(|s2| {
        // R⁻¹ is upper triangular; (XᵀWX)⁻¹ = R⁻¹ R⁻ᵀ.
        let mut rinv = vec![vec![0.0; rank]; rank];
        for c in 0..rank {
            rinv[c][c] = 1.0 / r_cols[c][c];
            for i in (0..c).rev() {
                let s: f64 = (i + 1..=c).map(|m| r_cols[m][i] * rinv[m][c]).sum();
                rinv[i][c] = -s / r_cols[i][i];
            }
        }
        let mut kept_cov = vec![vec![0.0; rank]; rank];
        for a in 0..rank {
            for bb in a..rank {
                let s: f64 = (bb..rank).map(|m| rinv[a][m] * rinv[bb][m]).sum::<f64>() * s2;
                kept_cov[a][bb] = s;
                kept_cov[bb][a] = s;
            }
        }
        let source = |j: usize| match estimability[j] {
            Estimability::Estimated => kept.iter().position(|&k| k == j),
            Estimability::DuplicateOf(src) => kept.iter().position(|&k| k == src),
            Estimability::Unestimable => None,
        };
        (0..p)
            .map(|a| {
                (0..p)
                    .map(|bb| match (source(a), source(bb)) {
                        (Some(i), Some(k)) => kept_cov[i][k],
                        _ => f64::NAN,
                    })
                    .collect()
            })
            .collect()
    });

    Ok(WlsFit {
        columns: design.columns.clone(),
        factors: design.factors.clone(),
        beta,
        cov_beta,
        estimability,
        aliased_columns,
        rss_weighted,
        n_obs: n,
        rank,
        df_resid,
        sigma2,
        fitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariancePartition {
    pub tss: f64,
    pub wsr: f64,
    pub wsse: f64,
}

/// Splits the weighted total sum of squares around the weighted grand mean
/// into regression and residual parts.
pub fn variance_partition(fit: &WlsFit, design: &DesignMatrix) -> VariancePartition {
    let w_total: f64 = design.weights.iter().sum();
    let mean = design
        .weights
        .iter()
        .zip(&design.response)
        .map(|(w, a)| w * a)
        .sum::<f64>()
        / w_total;
    let mut out = VariancePartition {
        tss: 0.0,
        wsr: 0.0,
        wsse: 0.0,
    };
    for ((w, a), f) in design.weights.iter().zip(&design.response).zip(&fit.fitted) {
        out.tss += w * (a - mean) * (a - mean);
        out.wsr += w * (f - mean) * (f - mean);
        out.wsse += w * (a - f) * (a - f);
    }
    out
}

/// `NaN` ⇄ `null` so fits with unestimable columns survive JSON.
mod nan_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| (!x.is_nan()).then_some(*x))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

mod nan_matrix {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    type Matrix = Vec<Vec<f64>>;

    pub fn serialize<S: Serializer>(m: &Option<Matrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| {
                m.iter()
                    .map(|row| row.iter().map(|x| (!x.is_nan()).then_some(*x)).collect())
                    .collect::<Vec<Vec<Option<f64>>>>()
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Matrix>, D::Error> {
        let raw = Option::<Vec<Vec<Option<f64>>>>::deserialize(d)?;
        Ok(raw.map(|m| {
            m.into_iter()
                .map(|row| row.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
                .collect()
        }))
    }
}
