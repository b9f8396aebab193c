//! Per-detector decision thresholds at a target false-positive rate.
//!
//! With [`Orientation::HigherIsAi`] a text is called AI iff `score > tau`;
//! [`Orientation::LowerIsAi`] mirrors this with `score < tau`. The threshold
//! is always one of the observed human scores, so the false-positive rate on
//! the calibration set never exceeds the target regardless of ties.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecisionRecord, Label, SampleRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    HigherIsAi,
    LowerIsAi,
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "higher-is-ai" => Ok(Orientation::HigherIsAi),
            "lower-is-ai" => Ok(Orientation::LowerIsAi),
            other => Err(format!(
                "expected higher-is-ai or lower-is-ai, got `{other}`"
            )),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::HigherIsAi => "higher-is-ai",
            Orientation::LowerIsAi => "lower-is-ai",
        })
    }
}

impl Orientation {
    /// Applies the strict-inequality decision rule.
    pub fn predict(self, score: f64, tau: f64) -> Label {
        let ai = match self {
            Orientation::HigherIsAi => score > tau,
            Orientation::LowerIsAi => score < tau,
        };
        if ai {
            Label::Ai
        } else {
            Label::Human
        }
    }
}

fn default_fpr() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub detector_id: String,
    #[serde(default)]
    pub orientation: Orientation,
    #[serde(default = "default_fpr")]
    pub target_fpr: f64,
}

impl DetectorConfig {
    pub fn new(detector_id: impl Into<String>, orientation: Orientation, target_fpr: f64) -> Result<Self> {
        let config = DetectorConfig {
            detector_id: detector_id.into(),
            orientation,
            target_fpr,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "target FPR {} for `{}` must lie in (0, 1)",
                self.target_fpr, self.detector_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub detector_id: String,
    pub orientation: Orientation,
    pub tau: f64,
    pub achieved_fpr: f64,
    pub n_human: usize,
}

/// Picks the smallest observed human score `tau` (largest, for
/// [`Orientation::LowerIsAi`]) whose false-positive fraction is at most the
/// target.
pub fn calibrate_threshold(human_scores: &[f64], config: &DetectorConfig) -> Result<CalibrationResult> {
    config.validate()?;
    if human_scores.is_empty() {
        return Err(Error::EmptyInput {
            context: "calibrate_threshold",
        });
    }
    if let Some(bad) = human_scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("human score {bad} is not finite")));
    }
    // Work on an "AI-ness" axis where higher always means more AI-like.
    let mut axis: Vec<f64> = match config.orientation {
        Orientation::HigherIsAi => human_scores.to_vec(),
        Orientation::LowerIsAi => human_scores.iter().map(|s| -s).collect(),
    };
    axis.sort_by(f64::total_cmp);
    let n = axis.len();

    // For each distinct value (ascending) the count strictly above it is
    // n - (index past its last copy); the first one meeting the target wins.
    let mut i = 0;
    let (tau_axis, above) = loop {
        let mut end = i + 1;
        while end < n && axis[end] == axis[i] {
            end += 1;
        }
        let above = n - end;
        if above as f64 / n as f64 <= config.target_fpr {
            break (axis[i], above);
        }
        i = end;
    };

    let tau = match config.orientation {
        Orientation::HigherIsAi => tau_axis,
        Orientation::LowerIsAi => -tau_axis,
    };
    Ok(CalibrationResult {
        detector_id: config.detector_id.clone(),
        orientation: config.orientation,
        tau,
        achieved_fpr: above as f64 / n as f64,
        n_human: n,
    })
}

/// Thresholds every record and flags whether the prediction is correct.
pub fn apply_threshold(
    records: &[SampleRecord],
    result: &CalibrationResult,
    config: &DetectorConfig,
) -> Result<Vec<DecisionRecord>> {
    records
        .iter()
        .map(|r| {
            if r.detector_id != config.detector_id {
                return Err(Error::DetectorMismatch {
                    text_id: r.text_id.clone(),
                    expected: config.detector_id.clone(),
                    found: r.detector_id.clone(),
                });
            }
            let predicted_label = config.orientation.predict(r.score, result.tau);
            Ok(DecisionRecord {
                text_id: r.text_id.clone(),
                detector_id: r.detector_id.clone(),
                true_label: r.true_label,
                predicted_label,
                correct: predicted_label == r.true_label,
                attributes: r.attributes.clone(),
            })
        })
        .collect()
}

/// False-positive rate at each candidate threshold, in input order.
pub fn fpr_at_naive_thresholds(
    human_scores: &[f64],
    taus: &[f64],
    config: &DetectorConfig,
) -> Result<Vec<(f64, f64)>> {
    if human_scores.is_empty() {
        return Err(Error::EmptyInput {
            context: "fpr_at_naive_thresholds",
        });
    }
    let n = human_scores.len() as f64;
    Ok(taus
        .iter()
        .map(|&tau| {
            let fp = human_scores
                .iter()
                .filter(|&&s| config.orientation.predict(s, tau) == Label::Ai)
                .count();
            (tau, fp as f64 / n)
        })
        .collect())
}

/// Calibrates each configured detector on its pooled human scores and
/// thresholds its records. Output follows the order of `configs`.
pub fn calibrate_detectors(
    records: &[SampleRecord],
    configs: &[DetectorConfig],
) -> Result<Vec<(CalibrationResult, Vec<DecisionRecord>)>> {
    let mut by_detector: BTreeMap<&str, Vec<SampleRecord>> = BTreeMap::new();
    for r in records {
        by_detector.entry(&r.detector_id).or_default().push(r.clone());
    }
    configs
        .par_iter()
        .map(|config| {
            let rows = by_detector
                .get(config.detector_id.as_str())
                .ok_or(Error::EmptyInput {
                    context: "calibrate_detectors: detector has no records",
                })?;
            let human: Vec<f64> = rows
                .iter()
                .filter(|r| r.true_label == Label::Human)
                .map(|r| r.score)
                .collect();
            let result = calibrate_threshold(&human, config)?;
            let decisions = apply_threshold(rows, &result, config)?;
            Ok((result, decisions))
        })
        .collect()
}
