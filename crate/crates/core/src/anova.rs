//! Type II ANOVA for main-effects WLS models.
//!
//! Each factor is tested by refitting the model without that factor's
//! columns (all other factors kept) and comparing weighted residual sums of
//! squares with a partial F-test:
//!
//! ```text
//! F = ((RSS_reduced - RSS_full) / Δp) / (RSS_full / (n - p_full))
//! ```
//!
//! `Δp` is the rank difference between the two fits, so aliased columns
//! never count as removed parameters.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, GroupTable};
use crate::numstats::design::build_design;
use crate::numstats::{f_sf, wls_fit, DesignMatrix, WlsFit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaRow {
    pub factor: String,
    pub delta_p: usize,
    pub rss_full: f64,
    pub rss_reduced: f64,
    /// `None` when the factor removes no estimable column.
    pub f_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub partial_r2: Option<f64>,
    pub significant: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaTable {
    pub alpha: f64,
    pub n_obs: usize,
    pub rank_full: usize,
    pub df_resid: usize,
    pub rss_full: f64,
    pub rows: Vec<AnovaRow>,
}

impl AnovaTable {
    pub fn row(&self, factor: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.factor == factor)
    }
}

/// Design, full fit and ANOVA table of one multi-factor analysis.
#[derive(Debug, Clone)]
pub struct FactorialAnalysis {
    pub design: DesignMatrix,
    pub fit: WlsFit,
    pub anova: AnovaTable,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("alpha {alpha} must lie in (0, 1)")))
    }
}

/// Fits the full model on `table` and tests every factor.
pub fn analyze<S: AsRef<str> + Sync>(
    table: &GroupTable,
    factors: &[S],
    schema: &AttributeSchema,
    alpha: f64,
) -> Result<FactorialAnalysis> {
    check_alpha(alpha)?;
    let design = build_design(table, factors, schema)?;
    let fit = wls_fit(&design)?;
    let anova = type2_anova_design(&design, &fit, factors, alpha)?;
    Ok(FactorialAnalysis { design, fit, anova })
}

pub fn type2_anova<S: AsRef<str> + Sync>(
    table: &GroupTable,
    factors: &[S],
    schema: &AttributeSchema,
    alpha: f64,
) -> Result<AnovaTable> {
    analyze(table, factors, schema, alpha).map(|a| a.anova)
}

/// Type II tests for `factors` given the full design and its fit. Rows
/// follow the order of `factors`.
pub fn type2_anova_design<S: AsRef<str> + Sync>(
    design: &DesignMatrix,
    full: &WlsFit,
    factors: &[S],
    alpha: f64,
) -> Result<AnovaTable> {
    check_alpha(alpha)?;
    if full.df_resid == 0 {
        return Err(Error::ZeroResidualDf {
            n: full.n_obs,
            rank: full.rank,
        });
    }
    for f in factors {
        if design.coding(f.as_ref()).is_none() {
            let observed = distinct_levels(design, f.as_ref());
            return Err(Error::DegenerateFactor {
                factor: f.as_ref().to_string(),
                observed,
            });
        }
    }
    let rss_full = full.rss_weighted;
    let df_resid = full.df_resid as f64;

    let rows = factors
        .par_iter()
        .map(|factor| {
            let factor = factor.as_ref();
            let reduced = wls_fit(&design.without_factor(factor)?)?;
            let delta_p = full.rank - reduced.rank;
            let rss_reduced = reduced.rss_weighted;
            let mut row = AnovaRow {
                factor: factor.to_string(),
                delta_p,
                rss_full,
                rss_reduced,
                f_stat: None,
                p_value: None,
                partial_r2: None,
                significant: false,
                note: None,
            };
            if delta_p == 0 {
                row.note = Some("all columns aliased with other factors; F undefined".into());
                return Ok(row);
            }
            let gain = (rss_reduced - rss_full).max(0.0);
            let (f, p) = if gain == 0.0 {
                (0.0, 1.0)
            } else if rss_full == 0.0 {
                (f64::INFINITY, 0.0)
            } else {
                let f = (gain / delta_p as f64) / (rss_full / df_resid);
                (f, f_sf(f, delta_p as f64, df_resid)?)
            };
            row.f_stat = Some(f);
            row.p_value = Some(p);
            row.partial_r2 = Some(if rss_reduced > 0.0 { gain / rss_reduced } else { 0.0 });
            row.significant = p < alpha;
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(AnovaTable {
        alpha,
        n_obs: full.n_obs,
        rank_full: full.rank,
        df_resid: full.df_resid,
        rss_full,
        rows,
    })
}

/// Number of distinct levels a factor takes in the design; used only to
/// explain a missing coding (the factor was dropped for having < 2).
fn distinct_levels(design: &DesignMatrix, factor: &str) -> usize {
    let dropped = design
        .warnings
        .iter()
        .find(|w| w.starts_with(&format!("factor `{factor}` has ")));
    dropped
        .and_then(|w| w.split(" has ").nth(1))
        .and_then(|rest| rest.split(' ').next())
        .and_then(|n| n.parse().ok())
        .unwrap_or(0)
}

/// Yes/No grid of factor significance per detector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceMatrix {
    pub factors: Vec<String>,
    /// Per detector: `Some(p < alpha)` or `None` when the test is undefined.
    pub rows: Vec<(String, Vec<Option<bool>>)>,
}

pub fn significance_matrix(tables: &BTreeMap<String, AnovaTable>) -> SignificanceMatrix {
    let factors: Vec<String> = tables
        .values()
        .next()
        .map(|t| t.rows.iter().map(|r| r.factor.clone()).collect())
        .unwrap_or_default();
    let rows = tables
        .iter()
        .map(|(detector, table)| {
            let cells = factors
                .iter()
                .map(|f| {
                    table
                        .row(f)
                        .and_then(|r| r.p_value)
                        .map(|p| p < table.alpha)
                })
                .collect();
            (detector.clone(), cells)
        })
        .collect();
    SignificanceMatrix { factors, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Attribute, GroupRow};
    use crate::numstats::Observation;

    fn two_group_design() -> DesignMatrix {
        let schema =
            AttributeSchema::new(vec![Attribute::with_default_reference("g", &["g1", "g2"])]).unwrap();
        let obs: Vec<Observation> = [("g1", 0.6), ("g1", 0.8), ("g2", 0.4), ("g2", 0.4)]
            .iter()
            .map(|(l, a)| Observation { levels: vec![l.to_string()], weight: 1.0, response: *a })
            .collect();
        DesignMatrix::from_observations(&schema, &["g".into()], &obs, &["g"]).unwrap()
    }

    #[test]
    fn two_group_hand_computation() {
        let d = two_group_design();
        let fit = wls_fit(&d).unwrap();
        let t = type2_anova_design(&d, &fit, &["g"], 0.05).unwrap();
        let row = &t.rows[0];
        assert!((row.rss_full - 0.02).abs() < 1e-12);
        assert!((row.rss_reduced - 0.11).abs() < 1e-12);
        assert_eq!(row.delta_p, 1);
        assert!((row.f_stat.unwrap() - 9.0).abs() < 1e-9);
        assert!((row.p_value.unwrap() - 0.095466).abs() < 1e-6);
        assert!((row.partial_r2.unwrap() - 0.8182).abs() < 1e-4);
        assert!(!row.significant);
    }

    #[test]
    fn equal_level_means_give_zero_f() {
        let schema = AttributeSchema::new(vec![
            Attribute::with_default_reference("a", &["x", "y"]),
            Attribute::with_default_reference("b", &["u", "v"]),
        ])
        .unwrap();
        let rows = [
            GroupRow { levels: vec!["x".into(), "u".into()], weight: 3, accuracy: 0.5 },
            GroupRow { levels: vec!["x".into(), "v".into()], weight: 2, accuracy: 0.7 },
            GroupRow { levels: vec!["y".into(), "u".into()], weight: 3, accuracy: 0.5 },
            GroupRow { levels: vec!["y".into(), "v".into()], weight: 2, accuracy: 0.7 },
            GroupRow { levels: vec!["x".into(), "u".into()], weight: 1, accuracy: 0.5 },
        ];
        // Duplicate keys are not allowed in a GroupTable; drop the last one.
        let table = GroupTable::new(vec!["a".into(), "b".into()], rows[..4].to_vec(), &schema).unwrap();
        let fit = analyze(&table, &["a", "b"], &schema, 0.05);
        // Saturated in a 2x2 main-effects model? No: 4 rows, rank 3, df 1.
        let t = fit.unwrap().anova;
        let a = t.row("a").unwrap();
        assert!(a.f_stat.unwrap().abs() < 1e-12);
        assert!((a.p_value.unwrap() - 1.0).abs() < 1e-12);
        assert!(a.partial_r2.unwrap().abs() < 1e-12);
    }

    #[test]
    fn fully_aliased_factor_is_flagged() {
        let schema = AttributeSchema::new(vec![
            Attribute::with_default_reference("a", &["x", "y"]),
            Attribute::with_default_reference("b", &["u", "v"]),
            Attribute::with_default_reference("c", &["p", "q"]),
        ])
        .unwrap();
        // b mirrors a exactly.
        let rows = vec![
            GroupRow { levels: vec!["x".into(), "u".into(), "p".into()], weight: 4, accuracy: 0.9 },
            GroupRow { levels: vec!["x".into(), "u".into(), "q".into()], weight: 5, accuracy: 0.8 },
            GroupRow { levels: vec!["y".into(), "v".into(), "p".into()], weight: 3, accuracy: 0.6 },
            GroupRow { levels: vec!["y".into(), "v".into(), "q".into()], weight: 6, accuracy: 0.65 },
        ];
        let table = GroupTable::new(vec!["a".into(), "b".into(), "c".into()], rows, &schema).unwrap();
        let t = type2_anova(&table, &["a", "b", "c"], &schema, 0.05).unwrap();
        for f in ["a", "b"] {
            let r = t.row(f).unwrap();
            assert_eq!(r.delta_p, 0);
            assert!(r.f_stat.is_none());
            assert!(r.note.is_some());
        }
        assert!(t.row("c").unwrap().f_stat.is_some());
    }

    #[test]
    fn degenerate_and_zero_df() {
        let schema = AttributeSchema::new(vec![
            Attribute::with_default_reference("a", &["x", "y"]),
            Attribute::with_default_reference("b", &["u", "v"]),
        ])
        .unwrap();
        let rows = [
            GroupRow { levels: vec!["x".into(), "u".into()], weight: 4, accuracy: 0.9 },
            GroupRow { levels: vec!["y".into(), "u".into()], weight: 3, accuracy: 0.6 },
            GroupRow { levels: vec!["y".into(), "u".into()], weight: 3, accuracy: 0.6 },
        ];
        let table = GroupTable::new(vec!["a".into(), "b".into()], rows[..2].to_vec(), &schema).unwrap();
        assert!(matches!(
            type2_anova(&table, &["a"], &schema, 0.05),
            Err(Error::ZeroResidualDf { .. })
        ));
        let mut more = rows[..2].to_vec();
        more.push(GroupRow { levels: vec!["x".into(), "u".into()], weight: 1, accuracy: 0.1 });
        let obs: Vec<Observation> = more
            .iter()
            .map(|r| Observation { levels: r.levels.clone(), weight: r.weight as f64, response: r.accuracy })
            .collect();
        let d = DesignMatrix::from_observations(&schema, &["a".into(), "b".into()], &obs, &["a", "b"])
            .unwrap();
        let fit = wls_fit(&d).unwrap();
        match type2_anova_design(&d, &fit, &["b"], 0.05) {
            Err(Error::DegenerateFactor { factor, observed }) => {
                assert_eq!(factor, "b");
                assert_eq!(observed, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn significance_grid() {
        let mk = |p: f64| AnovaTable {
            alpha: 0.05,
            n_obs: 10,
            rank_full: 2,
            df_resid: 8,
            rss_full: 1.0,
            rows: vec![AnovaRow {
                factor: "cefr".into(),
                delta_p: 1,
                rss_full: 1.0,
                rss_reduced: 2.0,
                f_stat: Some(1.0),
                p_value: Some(p),
                partial_r2: Some(0.5),
                significant: p < 0.05,
                note: None,
            }],
        };
        let mut tables = BTreeMap::new();
        tables.insert("chatgpt-roberta".to_string(), mk(0.036675));
        tables.insert("llmdet".to_string(), mk(0.07170));
        tables.insert("null".to_string(), mk(1.0));
        let m = significance_matrix(&tables);
        assert_eq!(m.factors, vec!["cefr".to_string()]);
        assert_eq!(m.rows[0].1, vec![Some(true)]);
        assert_eq!(m.rows[1].1, vec![Some(false)]);
        assert_eq!(m.rows[2].1, vec![Some(false)]);
    }
}
