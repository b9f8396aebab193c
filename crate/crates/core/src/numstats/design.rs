//! Treatment-coded design matrices for main-effects models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttributeSchema, GroupTable};

/// One weighted response with its factor levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Levels aligned with the factor names handed to the builder.
    pub levels: Vec<String>,
    pub weight: f64,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub label: String,
    /// `None` for the intercept.
    pub factor: Option<String>,
    pub level: Option<String>,
}

/// How one factor enters the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorCoding {
    pub name: String,
    /// Observed levels in declared order, reference included.
    pub levels: Vec<String>,
    pub reference: String,
    /// Column index of every non-reference level.
    pub columns: Vec<(String, usize)>,
}

impl FactorCoding {
    /// Column holding `level`, or `None` for the reference level.
    pub fn column_of(&self, level: &str) -> Option<usize> {
        self.columns
            .iter()
            .find(|(l, _)| l == level)
            .map(|&(_, c)| c)
    }
}

pub fn column_label(factor: &str, level: &str) -> String {
    format!("C({factor})[T.{level}]")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub columns: Vec<ColumnInfo>,
    pub factors: Vec<FactorCoding>,
    /// Column-major: `x[column][row]`, every entry 0 or 1.
    pub x: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub response: Vec<f64>,
    pub warnings: Vec<String>,
}

impl DesignMatrix {
    /// Derives the factor codings from the observed data and assembles the matrix.
    ///
    /// Factors follow schema order and levels declared order. Declared levels
    /// with no data get no column; factors with a single observed level are
    /// left out. Both cases are recorded in `warnings`.
    pub fn from_observations<S: AsRef<str>>(
        schema: &AttributeSchema,
        observation_factors: &[String],
        observations: &[Observation],
        factors: &[S],
    ) -> Result<Self> {
        let positions = schema.resolve_factors(factors)?;
        let mut warnings = Vec::new();
        let mut codings = Vec::new();
        for &pos in &positions {
            let attr = &schema.attributes()[pos];
            let slot = observation_factors
                .iter()
                .position(|f| f == &attr.name)
                .ok_or_else(|| Error::UnknownFactor(attr.name.clone()))?;
            let mut seen = vec![false; attr.levels.len()];
            for obs in observations {
                let level = &obs.levels[slot];
                let i = attr.level_index(level).ok_or_else(|| Error::UndeclaredLevel {
                    text_id: String::from("<observation>"),
                    attribute: attr.name.clone(),
                    level: level.clone(),
                })?;
                seen[i] = true;
            }
            let observed: Vec<String> = attr
                .levels
                .iter()
                .zip(&seen)
                .filter(|(_, &s)| s)
                .map(|(l, _)| l.clone())
                .collect();
            for (level, _) in attr.levels.iter().zip(&seen).filter(|(_, &s)| !s) {
                warnings.push(format!(
                    "level `{level}` of `{}` has no observations; no column",
                    attr.name
                ));
            }
            if observed.len() < 2 {
                warnings.push(format!(
                    "factor `{}` has {} observed level(s); omitted from the design",
                    attr.name,
                    observed.len()
                ));
                continue;
            }
            let reference = if seen[attr.reference_index()] {
                attr.reference_level.clone()
            } else {
                warnings.push(format!(
                    "reference level `{}` of `{}` is unobserved; using `{}`",
                    attr.reference_level, attr.name, observed[0]
                ));
                observed[0].clone()
            };
            codings.push(FactorCoding {
                name: attr.name.clone(),
                levels: observed,
                reference,
                columns: Vec::new(),
            });
        }
        let mut design = Self::assemble(codings, observation_factors, observations)?;
        design.warnings = warnings;
        Ok(design)
    }

    /// Builds the matrix for fixed factor codings. Column indices inside the
    /// codings are (re)assigned here.
    pub fn assemble(
        mut factors: Vec<FactorCoding>,
        observation_factors: &[String],
        observations: &[Observation],
    ) -> Result<Self> {
        let mut columns = vec![ColumnInfo {
            label: "Intercept".into(),
            factor: None,
            level: None,
        }];
        for coding in &mut factors {
            coding.columns = coding
                .levels
                .iter()
                .filter(|l| **l != coding.reference)
                .map(|level| {
                    columns.push(ColumnInfo {
                        label: column_label(&coding.name, level),
                        factor: Some(coding.name.clone()),
                        level: Some(level.clone()),
                    });
                    (level.clone(), columns.len() - 1)
                })
                .collect();
        }

        let n = observations.len();
        let mut x = vec![vec![0.0; n]; columns.len()];
        x[0].iter_mut().for_each(|v| *v = 1.0);
        for coding in &factors {
            let slot = observation_factors
                .iter()
                .position(|f| f == &coding.name)
                .ok_or_else(|| Error::UnknownFactor(coding.name.clone()))?;
            for (row, obs) in observations.iter().enumerate() {
                if let Some(col) = coding.column_of(&obs.levels[slot]) {
                    x[col][row] = 1.0;
                }
            }
        }

        Ok(DesignMatrix {
            columns,
            factors,
            x,
            weights: observations.iter().map(|o| o.weight).collect(),
            response: observations.iter().map(|o| o.response).collect(),
            warnings: Vec::new(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.weights.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn coding(&self, factor: &str) -> Option<&FactorCoding> {
        self.factors.iter().find(|f| f.name == factor)
    }

    /// The same design with every column of `factor` removed.
    pub fn without_factor(&self, factor: &str) -> Result<Self> {
        if self.coding(factor).is_none() {
            return Err(Error::FactorNotInModel(factor.to_string()));
        }
        let keep: Vec<usize> = (0..self.n_cols())
            .filter(|&c| self.columns[c].factor.as_deref() != Some(factor))
            .collect();
        let remap = |old: usize| keep.iter().position(|&k| k == old).expect("kept column");
        let factors = self
            .factors
            .iter()
            .filter(|f| f.name != factor)
            .map(|f| FactorCoding {
                columns: f.columns.iter().map(|(l, c)| (l.clone(), remap(*c))).collect(),
                ..f.clone()
            })
            .collect();
        Ok(DesignMatrix {
            columns: keep.iter().map(|&c| self.columns[c].clone()).collect(),
            factors,
            x: keep.iter().map(|&c| self.x[c].clone()).collect(),
            weights: self.weights.clone(),
            response: self.response.clone(),
            warnings: self.warnings.clone(),
        })
    }
}

/// Converts group rows into weighted observations (weight = text count,
/// response = mean accuracy).
pub fn group_observations(table: &GroupTable) -> Vec<Observation> {
    table
        .rows
        .iter()
        .map(|r| Observation {
            levels: r.levels.clone(),
            weight: r.weight as f64,
            response: r.accuracy,
        })
        .collect()
}

/// Treatment-coded design over the rows of a group table.
pub fn build_design<S: AsRef<str>>(
    table: &GroupTable,
    factors: &[S],
    schema: &AttributeSchema,
) -> Result<DesignMatrix> {
    for f in factors {
        if !table.factors.iter().any(|t| t == f.as_ref()) {
            return Err(Error::UnknownFactor(f.as_ref().to_string()));
        }
    }
    DesignMatrix::from_observations(schema, &table.factors, &group_observations(table), factors)
}
