//! Synthetic score datasets with planted subgroup effects.
//!
//! Every combination of attribute levels is a cell. Each cell gets
//! `n_per_cell` human and `n_per_cell` AI texts, each scored by every
//! detector with a normal draw. AI scores in a cell are shifted by the sum
//! of the planted effects matching the cell's levels.
//!
//! Couplings restrict the cells to those where two levels of different
//! attributes occur together or not at all, which plants exact aliasing.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, Label, SampleRecord};
use crate::rng::{fnv1a64, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub attribute: String,
    pub level: String,
    /// Added to the AI score mean of texts with this level.
    pub shift: f64,
    /// Restricts the effect to one detector; all detectors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<String>,
}

/// `attribute_a = level_a` holds exactly when `attribute_b = level_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCoupling {
    pub attribute_a: String,
    pub level_a: String,
    pub attribute_b: String,
    pub level_b: String,
}

fn default_detectors() -> Vec<String> {
    vec!["synthetic".into()]
}

fn default_generator() -> String {
    "synth-gen".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub schema: AttributeSchema,
    pub n_per_cell: usize,
    pub human_score_mean: f64,
    pub human_score_sd: f64,
    pub ai_score_mean: f64,
    pub ai_score_sd: f64,
    #[serde(default)]
    pub effects: Vec<PlantedEffect>,
    #[serde(default)]
    pub couplings: Vec<LevelCoupling>,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<String>,
    #[serde(default = "default_generator")]
    pub generator_id: String,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_per_cell == 0 {
            return bad("n_per_cell must be at least 1".into());
        }
        for (name, sd) in [("human_score_sd", self.human_score_sd), ("ai_score_sd", self.ai_score_sd)] {
            if !(sd > 0.0 && sd.is_finite()) {
                return bad(format!("{name} must be positive, got {sd}"));
            }
        }
        if !(self.human_score_mean.is_finite() && self.ai_score_mean.is_finite()) {
            return bad("score means must be finite".into());
        }
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        let check_level = |attribute: &str, level: &str| -> Result<()> {
            let attr = self
                .schema
                .attribute(attribute)
                .ok_or_else(|| Error::UnknownFactor(attribute.to_string()))?;
            if attr.level_index(level).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "level `{level}` is not declared for `{attribute}`"
                )));
            }
            Ok(())
        };
        for e in &self.effects {
            check_level(&e.attribute, &e.level)?;
            if !e.shift.is_finite() {
                return bad(format!("shift for {}={} is not finite", e.attribute, e.level));
            }
            if let Some(d) = &e.detector {
                if !self.detectors.contains(d) {
                    return bad(format!("effect names unknown detector `{d}`"));
                }
            }
        }
        for c in &self.couplings {
            check_level(&c.attribute_a, &c.level_a)?;
            check_level(&c.attribute_b, &c.level_b)?;
            if c.attribute_a == c.attribute_b {
                return bad(format!("coupling links `{}` to itself", c.attribute_a));
            }
        }
        Ok(())
    }

    /// Cells in declared order (last attribute varies fastest), after
    /// applying the couplings.
    pub fn cells(&self) -> Vec<Vec<String>> {
        let attrs = self.schema.attributes();
        let mut cells: Vec<Vec<String>> = vec![Vec::new()];
        for attr in attrs {
            cells = cells
                .into_iter()
                .flat_map(|prefix| {
                    attr.levels.iter().map(move |l| {
                        let mut next = prefix.clone();
                        next.push(l.clone());
                        next
                    })
                })
                .collect();
        }
        let pos = |name: &str| self.schema.position(name).expect("validated attribute");
        cells
            .into_iter()
            .filter(|cell| {
                self.couplings.iter().all(|c| {
                    (cell[pos(&c.attribute_a)] == c.level_a) == (cell[pos(&c.attribute_b)] == c.level_b)
                })
            })
            .collect()
    }

    fn ai_shift(&self, cell: &[String], detector: &str) -> f64 {
        self.effects
            .iter()
            .filter(|e| e.detector.as_deref().is_none_or(|d| d == detector))
            .filter(|e| cell[self.schema.position(&e.attribute).expect("validated")] == e.level)
            .map(|e| e.shift)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTruth {
    pub levels: Vec<String>,
    pub detector_id: String,
    pub ai_score_mean: f64,
}

/// Ground truth written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub n_per_cell: usize,
    pub n_cells: usize,
    pub n_records: usize,
    pub attributes: Vec<String>,
    pub effects: Vec<PlantedEffect>,
    pub couplings: Vec<LevelCoupling>,
    pub human_score_mean: f64,
    pub human_score_sd: f64,
    pub ai_score_sd: f64,
    pub cells: Vec<CellTruth>,
}

/// Draws the dataset. Records come out by detector, then cell, then label
/// (human first), then index.
pub fn generate(spec: &SynthSpec) -> Result<(Vec<SampleRecord>, SynthManifest)> {
    spec.validate()?;
    let cells = spec.cells();
    let names: Vec<String> = spec.schema.names().map(String::from).collect();
    let human = Normal::new(spec.human_score_mean, spec.human_score_sd).expect("validated sd");

    let units: Vec<(&String, usize)> = spec
        .detectors
        .iter()
        .flat_map(|d| (0..cells.len()).map(move |c| (d, c)))
        .collect();
    let chunks: Vec<Vec<SampleRecord>> = units
        .par_iter()
        .map(|&(detector, c)| {
            let cell = &cells[c];
            let ai_mean = spec.ai_score_mean + spec.ai_shift(cell, detector);
            let ai = Normal::new(ai_mean, spec.ai_score_sd).expect("validated sd");
            let attributes: std::collections::BTreeMap<String, String> =
                names.iter().cloned().zip(cell.iter().cloned()).collect();
            let mut out = Vec::with_capacity(2 * spec.n_per_cell);
            for (label, tag, dist) in [(Label::Human, "h", &human), (Label::Ai, "a", &ai)] {
                let mut key: Vec<&str> = vec![detector, tag];
                key.extend(cell.iter().map(String::as_str));
                let mut rng = substream(spec.seed, fnv1a64(&key));
                for i in 0..spec.n_per_cell {
                    out.push(SampleRecord {
                        text_id: format!("c{c:05}-{tag}{i:05}"),
                        detector_id: detector.clone(),
                        score: dist.sample(&mut rng),
                        true_label: label,
                        generator_id: (label == Label::Ai).then(|| spec.generator_id.clone()),
                        attributes: attributes.clone(),
                    });
                }
            }
            out
        })
        .collect();
    let records: Vec<SampleRecord> = chunks.into_iter().flatten().collect();

    let manifest = SynthManifest {
        seed: spec.seed,
        n_per_cell: spec.n_per_cell,
        n_cells: cells.len(),
        n_records: records.len(),
        attributes: names,
        effects: spec.effects.clone(),
        couplings: spec.couplings.clone(),
        human_score_mean: spec.human_score_mean,
        human_score_sd: spec.human_score_sd,
        ai_score_sd: spec.ai_score_sd,
        cells: units
            .iter()
            .map(|&(d, c)| CellTruth {
                levels: cells[c].clone(),
                detector_id: d.clone(),
                ai_score_mean: spec.ai_score_mean + spec.ai_shift(&cells[c], d),
            })
            .collect(),
    };
    Ok((records, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Attribute;

    fn spec(n: usize) -> SynthSpec {
        SynthSpec {
            schema: AttributeSchema::new(vec![
                Attribute::with_default_reference("cefr", &["A2_0", "B1_1", "XX_0"]),
                Attribute::with_default_reference("language_env", &["EFL", "NS"]),
            ])
            .unwrap(),
            n_per_cell: n,
            human_score_mean: 0.0,
            human_score_sd: 1.0,
            ai_score_mean: 2.0,
            ai_score_sd: 1.0,
            effects: vec![],
            couplings: vec![],
            detectors: default_detectors(),
            generator_id: default_generator(),
            seed: 11,
        }
    }

    #[test]
    fn one_binary_attribute_one_per_cell() {
        let mut s = spec(1);
        s.schema = AttributeSchema::new(vec![Attribute::with_default_reference("Sex", &["F", "M"])]).unwrap();
        let (records, manifest) = generate(&s).unwrap();
        assert_eq!(records.len(), 4);
        assert_eq!(manifest.n_cells, 2);
    }

    #[test]
    fn deterministic() {
        let a = generate(&spec(20)).unwrap();
        let b = generate(&spec(20)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(20);
        other.seed = 12;
        assert_ne!(a.0, generate(&other).unwrap().0);
    }

    #[test]
    fn planted_shift_moves_ai_mean() {
        let mut s = spec(4000);
        s.effects.push(PlantedEffect {
            attribute: "cefr".into(),
            level: "XX_0".into(),
            shift: -0.5,
            detector: None,
        });
        let (records, _) = generate(&s).unwrap();
        let mean = |pred: &dyn Fn(&SampleRecord) -> bool| {
            let v: Vec<f64> = records.iter().filter(|r| pred(r)).map(|r| r.score).collect();
            (v.iter().sum::<f64>() / v.len() as f64, v.len())
        };
        let (xx, n) = mean(&|r| r.true_label == Label::Ai && r.attributes["cefr"] == "XX_0");
        let (a2, _) = mean(&|r| r.true_label == Label::Ai && r.attributes["cefr"] == "A2_0");
        let bound = 3.0 * (2.0 / n as f64).sqrt();
        assert!(((a2 - xx) - 0.5).abs() < bound, "{a2} {xx}");
    }

    #[test]
    fn coupling_restricts_cells() {
        let mut s = spec(1);
        s.couplings.push(LevelCoupling {
            attribute_a: "cefr".into(),
            level_a: "XX_0".into(),
            attribute_b: "language_env".into(),
            level_b: "NS".into(),
        });
        let cells = s.cells();
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|c| (c[0] == "XX_0") == (c[1] == "NS")));
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(0);
        assert!(s.validate().is_err());
        s.n_per_cell = 1;
        s.ai_score_sd = 0.0;
        assert!(s.validate().is_err());
        let mut s = spec(1);
        s.effects.push(PlantedEffect {
            attribute: "cefr".into(),
            level: "C2".into(),
            shift: 1.0,
            detector: None,
        });
        assert!(s.validate().is_err());
    }
}
