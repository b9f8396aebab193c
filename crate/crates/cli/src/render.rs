//! Text renderings of the result tables.
//!
//! p-values use five significant digits in scientific notation, means and
//! coefficients four decimals. `--` marks a cell suppressed because the
//! factor's ANOVA was not significant; `NA` marks a value that could not be
//! computed.

use fairlens_core::anova::{AnovaTable, SignificanceMatrix};
use fairlens_core::bootstrap::BootstrapReport;
use fairlens_core::calibrate::CalibrationResult;
use fairlens_core::fmt::{fixed4, sci5};
use fairlens_core::posthoc::{LsMeanCell, PosthocResult};
use fairlens_core::single_factor::SingleFactorResult;
use fairlens_core::AttributeSchema;

pub const SUPPRESSED: &str = "--";
pub const MISSING: &str = "NA";

fn csv_string<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>())
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn yes_no(b: bool) -> String {
    if b { "Yes" } else { "No" }.to_string()
}

fn opt(x: Option<f64>, f: fn(f64) -> String) -> String {
    x.map_or_else(|| MISSING.to_string(), f)
}

fn plain(x: f64) -> String {
    x.to_string()
}

/// One row per detector with a p-value and Yes/No column per factor.
pub fn anova_wide(tables: &[(String, AnovaTable)], factors: &[String]) -> String {
    let mut header = vec!["detector".to_string()];
    for f in factors {
        header.push(format!("{f}_p_value"));
        header.push(format!("{f}_sig"));
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_string(
        &header,
        tables.iter().map(|(detector, table)| {
            let mut row = vec![detector.clone()];
            for f in factors {
                match table.row(f).and_then(|r| r.p_value) {
                    Some(p) => {
                        row.push(sci5(p));
                        row.push(yes_no(p < table.alpha));
                    }
                    None => {
                        row.push(MISSING.into());
                        row.push(MISSING.into());
                    }
                }
            }
            row
        }),
    )
}

/// Every ANOVA quantity, one row per detector and factor.
pub fn anova_detail(tables: &[(String, AnovaTable)]) -> String {
    csv_string(
        &[
            "detector",
            "factor",
            "delta_p",
            "df_resid",
            "rss_full",
            "rss_reduced",
            "f_stat",
            "p_value",
            "partial_r2",
            "significant",
            "note",
        ],
        tables.iter().flat_map(|(detector, table)| {
            table.rows.iter().map(move |r| {
                vec![
                    detector.clone(),
                    r.factor.clone(),
                    r.delta_p.to_string(),
                    table.df_resid.to_string(),
                    plain(r.rss_full),
                    plain(r.rss_reduced),
                    opt(r.f_stat, plain),
                    opt(r.p_value, sci5),
                    opt(r.partial_r2, plain),
                    yes_no(r.significant),
                    r.note.clone().unwrap_or_default(),
                ]
            })
        }),
    )
}

/// Markdown Yes/No grid.
pub fn significance_markdown(matrix: &SignificanceMatrix) -> String {
    let mut out = String::from("| Detector |");
    for f in &matrix.factors {
        out.push_str(&format!(" {f} |"));
    }
    out.push_str("\n|---|");
    for _ in &matrix.factors {
        out.push_str("---|");
    }
    out.push('\n');
    for (detector, cells) in &matrix.rows {
        out.push_str(&format!("| {detector} |"));
        for c in cells {
            let s = match c {
                Some(true) => "Yes",
                Some(false) => "No",
                None => MISSING,
            };
            out.push_str(&format!(" {s} |"));
        }
        out.push('\n');
    }
    out
}

/// Adjusted means for one detector and factor; `None` when gated out.
pub struct LsMeanColumn<'a> {
    pub detector: &'a str,
    pub factor: &'a str,
    pub cells: Option<&'a [LsMeanCell]>,
}

/// Factor/level rows (declared order) with one column per detector.
pub fn lsmeans_table(schema: &AttributeSchema, factors: &[String], detectors: &[String], columns: &[LsMeanColumn]) -> String {
    let mut header = vec!["factor", "level"];
    header.extend(detectors.iter().map(String::as_str));
    let mut rows = Vec::new();
    for factor in factors {
        let Some(attr) = schema.attribute(factor) else {
            continue;
        };
        for level in &attr.levels {
            let mut row = vec![factor.clone(), level.clone()];
            for detector in detectors {
                let col = columns.iter().find(|c| c.detector == detector && c.factor == factor);
                row.push(match col.map(|c| c.cells) {
                    Some(None) => SUPPRESSED.into(),
                    Some(Some(cells)) => cells
                        .iter()
                        .find(|c| &c.level == level)
                        .and_then(|c| c.adjusted_mean)
                        .map_or_else(|| MISSING.into(), fixed4),
                    None => MISSING.into(),
                });
            }
            rows.push(row);
        }
    }
    csv_string(&header, rows)
}

/// Pairwise comparisons; gated factors get a single marker row.
pub fn posthoc_table(results: &[(String, PosthocResult)]) -> String {
    csv_string(
        &["factor", "detector", "comparison", "wald_stat", "raw_p", "p_corr", "significant"],
        results.iter().flat_map(|(detector, res)| {
            let marker = res.skipped.as_ref().map(|reason| {
                vec![
                    res.factor.clone(),
                    detector.clone(),
                    format!("{SUPPRESSED} ({reason})"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ]
            });
            marker.into_iter().chain(res.rows.iter().map(move |r| {
                vec![
                    r.factor.clone(),
                    detector.clone(),
                    format!("{} vs {}", r.level_a, r.level_b),
                    fixed4(r.wald_stat),
                    sci5(r.raw_p),
                    sci5(r.holm_p),
                    yes_no(r.significant),
                ]
            }))
        }),
    )
}

pub fn bootstrap_table(reports: &[(String, BootstrapReport)]) -> String {
    csv_string(
        &[
            "detector",
            "parameter",
            "original_value",
            "bootstrap_mean",
            "bootstrap_std",
            "ci_lower",
            "ci_upper",
            "coverage",
            "failed_refits",
        ],
        reports.iter().flat_map(|(detector, report)| {
            report.parameters.iter().map(move |p| {
                vec![
                    detector.clone(),
                    p.parameter.clone(),
                    fixed4(p.original_value),
                    fixed4(p.boot_mean),
                    fixed4(p.boot_std),
                    fixed4(p.ci_lower),
                    fixed4(p.ci_upper),
                    p.coverage.to_string(),
                    p.n_failed.to_string(),
                ]
            })
        }),
    )
}

/// Welch or one-way ANOVA results, one row per detector and factor.
pub fn single_factor_table(results: &[(String, SingleFactorResult)], alpha: f64) -> String {
    csv_string(
        &["detector", "factor", "test", "statistic", "df", "p_value", "sig"],
        results.iter().map(|(detector, r)| match r {
            SingleFactorResult::Welch { factor, result, .. } => vec![
                detector.clone(),
                factor.clone(),
                "welch-t".into(),
                fixed4(result.t_stat),
                fixed4(result.df_approx),
                sci5(result.p_two_sided),
                yes_no(result.p_two_sided < alpha),
            ],
            SingleFactorResult::OnewayAnova { factor, row } => vec![
                detector.clone(),
                factor.clone(),
                "oneway-anova".into(),
                opt(row.f_stat, fixed4),
                row.delta_p.to_string(),
                opt(row.p_value, sci5),
                row.p_value.map_or_else(|| MISSING.into(), |p| yes_no(p < alpha)),
            ],
        }),
    )
}

pub fn calibration_table(results: &[CalibrationResult]) -> String {
    csv_string(
        &["detector", "orientation", "tau", "achieved_fpr", "n_human"],
        results.iter().map(|r| {
            vec![
                r.detector_id.clone(),
                r.orientation.to_string(),
                plain(r.tau),
                plain(r.achieved_fpr),
                r.n_human.to_string(),
            ]
        }),
    )
}
