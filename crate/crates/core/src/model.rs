//! Domain types shared by every stage: the attribute schema, per-text
//! observations, thresholded decisions and the aggregated group table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// True or predicted source of a text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Human,
    #[serde(rename = "AI")]
    Ai,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Human => "Human",
            Label::Ai => "AI",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "Human" => Ok(Label::Human),
            "AI" => Ok(Label::Ai),
            other => Err(format!("expected `Human` or `AI`, got `{other}`")),
        }
    }
}

/// A categorical author attribute with its declared levels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Attribute {
    pub name: String,
    pub levels: Vec<String>,
    pub reference_level: String,
}

impl Attribute {
    /// Builds an attribute whose reference is the lexicographically smallest level.
    pub fn with_default_reference(name: impl Into<String>, levels: &[&str]) -> Self {
        let levels: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
        let reference_level = levels.iter().min().cloned().unwrap_or_default();
        Attribute {
            name: name.into(),
            levels,
            reference_level,
        }
    }

    pub fn level_index(&self, level: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == level)
    }

    pub fn reference_index(&self) -> usize {
        self.level_index(&self.reference_level)
            .expect("validated schema has a declared reference level")
    }
}

#[derive(Deserialize)]
struct RawAttribute {
    name: String,
    levels: Vec<String>,
    #[serde(default)]
    reference_level: Option<String>,
}

#[derive(Deserialize)]
struct RawSchema {
    attributes: Vec<RawAttribute>,
}

impl TryFrom<RawSchema> for AttributeSchema {
    type Error = Error;

    fn try_from(raw: RawSchema) -> Result<Self> {
        let attributes = raw
            .attributes
            .into_iter()
            .map(|a| {
                let reference_level = a
                    .reference_level
                    .or_else(|| a.levels.iter().min().cloned())
                    .unwrap_or_default();
                Attribute {
                    name: a.name,
                    levels: a.levels,
                    reference_level,
                }
            })
            .collect();
        AttributeSchema::new(attributes)
    }
}

/// Ordered list of attributes. Attribute order fixes the design-matrix column
/// order; level order fixes the column order within a factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct AttributeSchema {
    attributes: Vec<Attribute>,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for attr in &attributes {
            if attr.name.is_empty() {
                return Err(Error::InvalidSchema("attribute name is empty".into()));
            }
            if !names.insert(attr.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate attribute `{}`",
                    attr.name
                )));
            }
            if attr.levels.is_empty() {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` declares no levels",
                    attr.name
                )));
            }
            let distinct: BTreeSet<&String> = attr.levels.iter().collect();
            if distinct.len() != attr.levels.len() {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` declares duplicate levels",
                    attr.name
                )));
            }
            if attr.level_index(&attr.reference_level).is_none() {
                return Err(Error::InvalidSchema(format!(
                    "reference level `{}` is not a level of `{}`",
                    attr.reference_level, attr.name
                )));
            }
        }
        Ok(AttributeSchema { attributes })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, name: &str) -> Option<&Attribute> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    /// Returns a copy with a different reference level for one attribute.
    pub fn with_reference(&self, attribute: &str, level: &str) -> Result<Self> {
        let mut attributes = self.attributes.clone();
        let attr = attributes
            .iter_mut()
            .find(|a| a.name == attribute)
            .ok_or_else(|| Error::UnknownFactor(attribute.to_string()))?;
        attr.reference_level = level.to_string();
        AttributeSchema::new(attributes)
    }

    /// Checks that every requested factor exists and returns them in schema order.
    pub fn resolve_factors<S: AsRef<str>>(&self, factors: &[S]) -> Result<Vec<usize>> {
        let mut idx = factors
            .iter()
            .map(|f| {
                self.position(f.as_ref())
                    .ok_or_else(|| Error::UnknownFactor(f.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        idx.sort_unstable();
        idx.dedup();
        Ok(idx)
    }
}

/// Access to the categorical attributes of a record.
pub trait Attributed {
    fn text_id(&self) -> &str;
    fn attribute(&self, name: &str) -> Option<&str>;
}

/// One detector score for one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub text_id: String,
    pub detector_id: String,
    pub score: f64,
    pub true_label: Label,
    pub generator_id: Option<String>,
    pub attributes: BTreeMap<String, String>,
}

impl Attributed for SampleRecord {
    fn text_id(&self) -> &str {
        &self.text_id
    }

    fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

/// A thresholded detector judgement on one text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub text_id: String,
    pub detector_id: String,
    pub true_label: Label,
    pub predicted_label: Label,
    pub correct: bool,
    pub attributes: BTreeMap<String, String>,
}

impl Attributed for DecisionRecord {
    fn text_id(&self) -> &str {
        &self.text_id
    }

    fn attribute(&self, name: &str) -> Option<&str> {
        self.attributes.get(name).map(String::as_str)
    }
}

/// Which decisions enter the accuracy aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelFilter {
    #[default]
    All,
    AiOnly,
    HumanOnly,
}

impl LabelFilter {
    pub fn keeps(self, label: Label) -> bool {
        match self {
            LabelFilter::All => true,
            LabelFilter::AiOnly => label == Label::Ai,
            LabelFilter::HumanOnly => label == Label::Human,
        }
    }

    pub fn apply(self, decisions: &[DecisionRecord]) -> Vec<DecisionRecord> {
        decisions
            .iter()
            .filter(|d| self.keeps(d.true_label))
            .cloned()
            .collect()
    }
}

impl FromStr for LabelFilter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "all" => Ok(LabelFilter::All),
            "ai-only" => Ok(LabelFilter::AiOnly),
            "human-only" => Ok(LabelFilter::HumanOnly),
            other => Err(format!(
                "expected one of all, ai-only, human-only; got `{other}`"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub text_id: String,
    pub attribute: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelCounts {
    pub attribute: String,
    pub counts: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub level_counts: Vec<LevelCounts>,
    pub violations: Vec<Violation>,
}

/// Counts levels per attribute and lists every record that breaks the schema.
pub fn validate_dataset(records: &[SampleRecord], schema: &AttributeSchema) -> ValidationReport {
    let mut counts: Vec<Vec<usize>> = schema
        .attributes()
        .iter()
        .map(|a| vec![0; a.levels.len()])
        .collect();
    let mut violations = Vec::new();

    for record in records {
        if !record.score.is_finite() {
            violations.push(Violation {
                text_id: record.text_id.clone(),
                attribute: None,
                message: format!("score {} is not finite", record.score),
            });
        }
        if record.true_label == Label::Ai && record.generator_id.is_none() {
            violations.push(Violation {
                text_id: record.text_id.clone(),
                attribute: None,
                message: "AI record without generator_id".into(),
            });
        }
        for (attr, tally) in schema.attributes().iter().zip(counts.iter_mut()) {
            match record.attributes.get(&attr.name) {
                None => violations.push(Violation {
                    text_id: record.text_id.clone(),
                    attribute: Some(attr.name.clone()),
                    message: "missing value".into(),
                }),
                Some(level) => match attr.level_index(level) {
                    Some(i) => tally[i] += 1,
                    None => violations.push(Violation {
                        text_id: record.text_id.clone(),
                        attribute: Some(attr.name.clone()),
                        message: format!("undeclared level `{level}`"),
                    }),
                },
            }
        }
    }

    let level_counts = schema
        .attributes()
        .iter()
        .zip(counts)
        .map(|(attr, tally)| LevelCounts {
            attribute: attr.name.clone(),
            counts: attr.levels.iter().cloned().zip(tally).collect(),
        })
        .collect();

    ValidationReport {
        ok: violations.is_empty(),
        level_counts,
        violations,
    }
}

/// One aggregated cell: a combination of factor levels, the number of
/// decisions it holds and their mean correctness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    /// Levels aligned with [`GroupTable::factors`].
    pub levels: Vec<String>,
    pub weight: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    /// Grouping factors in schema order.
    pub factors: Vec<String>,
    pub rows: Vec<GroupRow>,
}

impl GroupTable {
    /// Validates rows against the schema and sorts them by declared level order.
    pub fn new(factors: Vec<String>, rows: Vec<GroupRow>, schema: &AttributeSchema) -> Result<Self> {
        let attrs = factors
            .iter()
            .map(|f| {
                schema
                    .attribute(f)
                    .ok_or_else(|| Error::UnknownFactor(f.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut keyed = BTreeMap::new();
        for row in rows {
            if row.levels.len() != attrs.len() {
                return Err(Error::InvalidConfig(format!(
                    "group row has {} levels for {} factors",
                    row.levels.len(),
                    attrs.len()
                )));
            }
            if row.weight == 0 {
                return Err(Error::InvalidConfig("group weight must be >= 1".into()));
            }
            if !(0.0..=1.0).contains(&row.accuracy) {
                return Err(Error::InvalidConfig(format!(
                    "group accuracy {} outside [0, 1]",
                    row.accuracy
                )));
            }
            let key = attrs
                .iter()
                .zip(&row.levels)
                .map(|(a, l)| {
                    a.level_index(l).ok_or_else(|| Error::UndeclaredLevel {
                        text_id: String::from("<group>"),
                        attribute: a.name.clone(),
                        level: l.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if keyed.insert(key, row).is_some() {
                return Err(Error::InvalidConfig("duplicate group key".into()));
            }
        }
        let mut ordered: Vec<(usize, String)> = factors
            .iter()
            .map(|f| (schema.position(f).unwrap_or(usize::MAX), f.clone()))
            .collect();
        ordered.sort();
        if ordered.iter().map(|(_, f)| f).ne(factors.iter()) {
            return Err(Error::InvalidConfig(
                "group table factors must follow schema order".into(),
            ));
        }
        Ok(GroupTable {
            factors,
            rows: keyed.into_values().collect(),
        })
    }

    pub fn total_weight(&self) -> u64 {
        self.rows.iter().map(|r| r.weight).sum()
    }

    /// Weight-averaged accuracy over all rows.
    pub fn weighted_accuracy(&self) -> f64 {
        let total = self.total_weight() as f64;
        self.rows
            .iter()
            .map(|r| r.weight as f64 * r.accuracy)
            .sum::<f64>()
            / total
    }
}

/// Groups decisions by every observed combination of `factors`.
///
/// Factors are reordered to schema order; rows come out sorted by declared
/// level order, so the result does not depend on input order.
pub fn aggregate_groups<S: AsRef<str>>(
    decisions: &[DecisionRecord],
    schema: &AttributeSchema,
    factors: &[S],
) -> Result<GroupTable> {
    let positions = schema.resolve_factors(factors)?;
    if decisions.is_empty() {
        return Err(Error::EmptyInput {
            context: "aggregate_groups",
        });
    }
    let attrs: Vec<&Attribute> = positions.iter().map(|&i| &schema.attributes()[i]).collect();

    let mut cells: BTreeMap<Vec<usize>, (u64, u64)> = BTreeMap::new();
    for d in decisions {
        let key = attrs
            .iter()
            .map(|a| {
                let level = d.attribute(&a.name).unwrap_or("");
                a.level_index(level).ok_or_else(|| Error::UndeclaredLevel {
                    text_id: d.text_id.clone(),
                    attribute: a.name.clone(),
                    level: level.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let cell = cells.entry(key).or_insert((0, 0));
        cell.0 += 1;
        cell.1 += u64::from(d.correct);
    }

    let rows = cells
        .into_iter()
        .map(|(key, (n, hits))| GroupRow {
            levels: key
                .iter()
                .zip(&attrs)
                .map(|(&i, a)| a.levels[i].clone())
                .collect(),
            weight: n,
            accuracy: hits as f64 / n as f64,
        })
        .collect();

    Ok(GroupTable {
        factors: attrs.iter().map(|a| a.name.clone()).collect(),
        rows,
    })
}
