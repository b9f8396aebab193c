//! Matched subsets and one-to-one down-sampling over control combinations.
//!
//! Records are partitioned by their values on the control features. The
//! matched subset keeps every partition that contains all categories of the
//! main feature. Down-sampling additionally pairs each record of the
//! partition's smallest category with one randomly drawn, unused record of
//! every other category.
//!
//! Each control combination draws from its own substream keyed by the FNV
//! hash of its level strings, so results do not depend on thread count.
//! Output records keep their input order.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Attributed, AttributeSchema};
use crate::rng::{fnv1a64, substream};

/// Which main-feature categories a combination must contain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CategorySemantics {
    /// Every level declared in the schema.
    #[default]
    Declared,
    /// Every level that occurs anywhere in the input.
    Observed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub main_feature: String,
    pub control_features: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub semantics: CategorySemantics,
}

impl MatchSpec {
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        if schema.attribute(&self.main_feature).is_none() {
            return Err(Error::UnknownFactor(self.main_feature.clone()));
        }
        for (i, c) in self.control_features.iter().enumerate() {
            if schema.attribute(c).is_none() {
                return Err(Error::UnknownFactor(c.clone()));
            }
            if *c == self.main_feature {
                return Err(Error::InvalidConfig(format!(
                    "main feature `{c}` is also listed as a control"
                )));
            }
            if self.control_features[..i].contains(c) {
                return Err(Error::InvalidConfig(format!("control `{c}` listed twice")));
            }
        }
        Ok(())
    }
}

/// Records of one control combination, as input indices, plus the index
/// of each record's main-feature category in `categories`.
struct Partition {
    key: Vec<String>,
    members: Vec<(usize, Option<usize>)>,
}

struct Partitioned {
    categories: Vec<String>,
    partitions: Vec<Partition>,
}

fn value<'a, R: Attributed>(record: &'a R, schema: &AttributeSchema, name: &str) -> Result<&'a str> {
    let level = record.attribute(name).ok_or_else(|| Error::UndeclaredLevel {
        text_id: record.text_id().to_string(),
        attribute: name.to_string(),
        level: String::new(),
    })?;
    let attr = schema.attribute(name).expect("validated attribute");
    if attr.level_index(level).is_none() {
        return Err(Error::UndeclaredLevel {
            text_id: record.text_id().to_string(),
            attribute: name.to_string(),
            level: level.to_string(),
        });
    }
    Ok(level)
}

fn partition<R: Attributed>(records: &[R], spec: &MatchSpec, schema: &AttributeSchema) -> Result<Partitioned> {
    spec.validate(schema)?;
    let main = schema.attribute(&spec.main_feature).expect("validated");
    let mut seen = vec![false; main.levels.len()];
    let mut by_combo: BTreeMap<Vec<String>, Vec<(usize, usize)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let key = spec
            .control_features
            .iter()
            .map(|c| value(r, schema, c).map(String::from))
            .collect::<Result<Vec<_>>>()?;
        let level = main.level_index(value(r, schema, &spec.main_feature)?).expect("checked");
        seen[level] = true;
        by_combo.entry(key).or_default().push((i, level));
    }
    let required: Vec<usize> = match spec.semantics {
        CategorySemantics::Declared => (0..main.levels.len()).collect(),
        CategorySemantics::Observed => (0..main.levels.len()).filter(|&l| seen[l]).collect(),
    };
    let categories = required.iter().map(|&l| main.levels[l].clone()).collect();
    let partitions = by_combo
        .into_iter()
        .map(|(key, members)| Partition {
            key,
            members: members
                .into_iter()
                .map(|(i, l)| (i, required.iter().position(|&r| r == l)))
                .collect(),
        })
        .collect();
    Ok(Partitioned {
        categories,
        partitions,
    })
}

impl Partition {
    /// Input indices per required category, or `None` if one is missing.
    fn by_category(&self, n_categories: usize) -> Option<Vec<Vec<usize>>> {
        let mut groups = vec![Vec::new(); n_categories];
        for &(i, c) in &self.members {
            if let Some(c) = c {
                groups[c].push(i);
            }
        }
        (n_categories > 0 && groups.iter().all(|g| !g.is_empty())).then_some(groups)
    }
}

fn pick<R: Clone>(records: &[R], mut keep: Vec<usize>) -> Vec<R> {
    keep.sort_unstable();
    keep.into_iter().map(|i| records[i].clone()).collect()
}

/// Records of every control combination that contains all main categories.
pub fn matched_subset<R: Attributed + Clone>(
    records: &[R],
    spec: &MatchSpec,
    schema: &AttributeSchema,
) -> Result<Vec<R>> {
    let parts = partition(records, spec, schema)?;
    let n = parts.categories.len();
    let keep = parts
        .partitions
        .iter()
        .filter(|p| p.by_category(n).is_some())
        .flat_map(|p| p.members.iter().map(|&(i, _)| i))
        .collect();
    Ok(pick(records, keep))
}

/// One-to-one matched sample: within each complete control combination,
/// every category keeps as many records as the smallest one.
pub fn downsample_matched<R: Attributed + Clone>(
    records: &[R],
    spec: &MatchSpec,
    schema: &AttributeSchema,
) -> Result<Vec<R>> {
    let parts = partition(records, spec, schema)?;
    let n = parts.categories.len();
    let keep: Vec<usize> = parts
        .partitions
        .par_iter()
        .flat_map_iter(|p| {
            let Some(groups) = p.by_category(n) else {
                return Vec::new();
            };
            // First category (declared order) among those of minimal size.
            let smallest = (0..n).min_by_key(|&c| groups[c].len()).expect("non-empty");
            let mut rng = substream(spec.seed, fnv1a64(&p.key));
            let mut pools = groups.clone();
            let mut chosen = Vec::with_capacity(n * groups[smallest].len());
            for &x in &groups[smallest] {
                chosen.push(x);
                for (c, pool) in pools.iter_mut().enumerate() {
                    if c == smallest {
                        continue;
                    }
                    let j = rng.random_range(0..pool.len());
                    chosen.push(pool.swap_remove(j));
                }
            }
            chosen
        })
        .collect();
    Ok(pick(records, keep))
}
