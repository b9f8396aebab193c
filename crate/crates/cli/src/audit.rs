//! The full audit pipeline behind `fairlens audit`.
//!
//! Stages run in order and hand their results on through files in the
//! output directory. Work inside a stage is spread over detectors (and
//! bootstrap replicates); every output is assembled in a fixed order so
//! the files do not depend on the thread count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fairlens_core::anova::{analyze, significance_matrix, FactorialAnalysis};
use fairlens_core::bootstrap::{bootstrap_wls, BootstrapReport};
use fairlens_core::calibrate::{calibrate_detectors, CalibrationResult, DetectorConfig};
use fairlens_core::ingest;
use fairlens_core::matching::{downsample_matched, matched_subset};
use fairlens_core::posthoc::{gated_lsmeans, pairwise_wald, LsMeanCell, PosthocResult};
use fairlens_core::single_factor::{single_factor_test, SingleFactorResult, WelchOptions};
use fairlens_core::{aggregate_groups, AttributeSchema, DecisionRecord, Error, GroupTable};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::render::{self, LsMeanColumn};
use crate::{at as stage, StageError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub matching: Option<u64>,
    pub bootstrap: Option<u64>,
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub config: RunConfig,
    pub config_sha256: String,
    pub seeds: Seeds,
    pub detectors: Vec<String>,
    pub factors: Vec<String>,
    pub outputs: Vec<OutputDigest>,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<OutputDigest>,
}

impl Outputs {
    fn write(&mut self, name: &str, content: &str) -> Result<(), StageError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| StageError::new("report", Error::io(&path, e)))?;
        self.written.push(OutputDigest {
            file: name.to_string(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), StageError> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, &text)
    }
}

/// Detector id made safe for use in a file name.
pub fn file_stem(detector: &str) -> String {
    detector
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect()
}

fn read_input(role: &'static str, path: &Path) -> Result<InputDigest, StageError> {
    let bytes = fs::read(path).map_err(|e| StageError::new("ingest", Error::io(path, e)))?;
    Ok(InputDigest {
        role,
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

struct DetectorRun {
    detector: String,
    decisions: Vec<DecisionRecord>,
    table: GroupTable,
    analysis: FactorialAnalysis,
}

/// Runs every configured stage and writes the artifacts into `out_dir`.
pub fn run_full_audit(config: &RunConfig, out_dir: &Path) -> Result<RunManifest, StageError> {
    config.validate().map_err(stage("config"))?;
    let inputs = vec![read_input("scores", &config.scores)?, read_input("schema", &config.schema)?];
    let schema = ingest::read_schema(&config.schema).map_err(stage("ingest"))?;
    let records = ingest::read_scores(&config.scores, &schema).map_err(stage("ingest"))?;
    if records.is_empty() {
        return Err(StageError::new("ingest", Error::EmptyInput { context: "score file" }));
    }
    fs::create_dir_all(out_dir).map_err(|e| StageError::new("report", Error::io(out_dir, e)))?;
    let mut out = Outputs {
        dir: out_dir.to_path_buf(),
        written: Vec::new(),
    };

    let factors: Vec<String> = if config.factors.is_empty() {
        schema.names().map(String::from).collect()
    } else {
        let positions = schema.resolve_factors(&config.factors).map_err(stage("config"))?;
        positions.iter().map(|&i| schema.attributes()[i].name.clone()).collect()
    };

    // Calibrate.
    let detector_configs: Vec<DetectorConfig> = if config.detectors.is_empty() {
        let ids: std::collections::BTreeSet<&str> = records.iter().map(|r| r.detector_id.as_str()).collect();
        ids.into_iter()
            .map(|id| DetectorConfig::new(id, Default::default(), 0.05))
            .collect::<fairlens_core::Result<_>>()
            .map_err(stage("calibrate"))?
    } else {
        config.detectors.clone()
    };
    let calibrated = calibrate_detectors(&records, &detector_configs).map_err(stage("calibrate"))?;
    let results: Vec<CalibrationResult> = calibrated.iter().map(|(r, _)| r.clone()).collect();
    out.write("calibration.csv", &render::calibration_table(&results))?;
    let all_decisions: Vec<DecisionRecord> = calibrated.iter().flat_map(|(_, d)| d.iter().cloned()).collect();
    let decisions_path = out_dir.join("decisions.csv");
    ingest::write_decisions(&all_decisions, &schema, &decisions_path).map_err(stage("calibrate"))?;
    out.written.push(OutputDigest {
        file: "decisions.csv".into(),
        sha256: sha256_hex(&fs::read(&decisions_path).map_err(|e| StageError::new("report", Error::io(&decisions_path, e)))?),
    });

    // Aggregate and fit.
    let runs: Vec<DetectorRun> = calibrated
        .into_par_iter()
        .map(|(result, decisions)| {
            let decisions = config.label_filter.apply(&decisions);
            let table = aggregate_groups(&decisions, &schema, &factors).map_err(stage("aggregate"))?;
            let analysis = analyze(&table, &factors, &schema, config.alpha).map_err(stage("anova"))?;
            Ok(DetectorRun {
                detector: result.detector_id,
                decisions,
                table,
                analysis,
            })
        })
        .collect::<Result<_, StageError>>()?;

    for run in &runs {
        let mut buf = Vec::new();
        ingest::write_group_table_to(&run.table, &mut buf).map_err(stage("aggregate"))?;
        out.write(&format!("groups-{}.csv", file_stem(&run.detector)), &String::from_utf8_lossy(&buf))?;
        out.write_json(
            &format!("fit-{}.json", file_stem(&run.detector)),
            &crate::FitBundle {
                detector: run.detector.clone(),
                fit: run.analysis.fit.clone(),
                anova: run.analysis.anova.clone(),
            },
        )?;
    }

    let detectors: Vec<String> = runs.iter().map(|r| r.detector.clone()).collect();
    let tables: Vec<(String, _)> = runs.iter().map(|r| (r.detector.clone(), r.analysis.anova.clone())).collect();
    out.write("anova.csv", &render::anova_wide(&tables, &factors))?;
    out.write("anova_detail.csv", &render::anova_detail(&tables))?;
    let by_detector: BTreeMap<String, _> = tables.iter().cloned().collect();
    out.write("significance.md", &render::significance_markdown(&significance_matrix(&by_detector)))?;

    // LSMeans and post-hoc tests for every factor that is in the fitted model.
    let mut ls: Vec<(String, String, Option<Vec<LsMeanCell>>)> = Vec::new();
    let mut posthoc: Vec<(String, PosthocResult)> = Vec::new();
    for factor in &factors {
        for run in &runs {
            let fit = &run.analysis.fit;
            let gate = &run.analysis.anova;
            let cells = gated_lsmeans(fit, factor, config.lsmeans_mode, gate).map_err(stage("lsmeans"))?;
            ls.push((run.detector.clone(), factor.clone(), cells));
            let res = pairwise_wald(fit, factor, config.alpha, gate, config.wald_distribution)
                .map_err(stage("posthoc"))?;
            posthoc.push((run.detector.clone(), res));
        }
    }
    let columns: Vec<LsMeanColumn> = ls
        .iter()
        .map(|(d, f, c)| LsMeanColumn {
            detector: d,
            factor: f,
            cells: c.as_deref(),
        })
        .collect();
    out.write("lsmeans.csv", &render::lsmeans_table(&schema, &factors, &detectors, &columns))?;
    out.write("posthoc.csv", &render::posthoc_table(&posthoc))?;

    if config.single_factor {
        let mut rows = Vec::new();
        for run in &runs {
            for factor in &factors {
                let r = single_factor_test(&run.table, factor, &schema, config.alpha, WelchOptions::default())
                    .map_err(stage("single-factor"))?;
                rows.push((run.detector.clone(), r));
            }
        }
        out.write("single_factor.csv", &render::single_factor_table(&rows, config.alpha))?;
    }

    if let Some(spec) = &config.matching {
        spec.validate(&schema).map_err(stage("match"))?;
        for (name, downsample) in [("matched_subset.csv", false), ("matched_downsampled.csv", true)] {
            let rows = runs
                .par_iter()
                .map(|run| {
                    let subset = if downsample {
                        downsample_matched(&run.decisions, spec, &schema)
                    } else {
                        matched_subset(&run.decisions, spec, &schema)
                    }
                    .map_err(stage("match"))?;
                    matched_test(&subset, &schema, &factors, &spec.main_feature, config.alpha)
                        .map(|r| (run.detector.clone(), r))
                        .map_err(stage("match"))
                })
                .collect::<Result<Vec<_>, StageError>>()?;
            out.write(name, &render::single_factor_table(&rows, config.alpha))?;
        }
    }

    if let Some(boot) = config.bootstrap {
        let reports: Vec<(String, BootstrapReport)> = runs
            .iter()
            .map(|run| {
                bootstrap_wls(&run.decisions, &factors, &schema, boot)
                    .map(|r| (run.detector.clone(), r))
                    .map_err(stage("bootstrap"))
            })
            .collect::<Result<_, StageError>>()?;
        out.write("bootstrap.csv", &render::bootstrap_table(&reports))?;
    }

    let config_json = serde_json::to_string(config).expect("serializable config");
    let manifest = RunManifest {
        tool: "fairlens",
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        config: config.clone(),
        config_sha256: sha256_hex(config_json.as_bytes()),
        seeds: Seeds {
            matching: config.matching.as_ref().map(|m| m.seed),
            bootstrap: config.bootstrap.map(|b| b.seed),
        },
        detectors,
        factors,
        outputs: out.written.clone(),
    };
    out.write_json("run_manifest.json", &manifest)?;
    Ok(manifest)
}

/// Single-factor test of `main` on a matched sample.
fn matched_test(
    decisions: &[DecisionRecord],
    schema: &AttributeSchema,
    factors: &[String],
    main: &str,
    alpha: f64,
) -> fairlens_core::Result<SingleFactorResult> {
    let mut grouping: Vec<String> = factors.to_vec();
    if !grouping.iter().any(|f| f == main) {
        grouping.push(main.to_string());
    }
    let table = aggregate_groups(decisions, schema, &grouping)?;
    single_factor_test(&table, main, schema, alpha, WelchOptions::default())
}
