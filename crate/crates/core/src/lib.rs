//! Bias auditing for binary AI-text detectors.
//!
//! The pipeline calibrates each detector's decision threshold at a fixed
//! false-positive rate on human-written text, aggregates per-subgroup
//! accuracy, fits a multi-factor weighted least squares model over the
//! aggregated cells and tests each author attribute with a Type II partial
//! F-test. Significant factors get least-squares means and Holm-corrected
//! pairwise Wald tests. Single-factor tests, matched subsets and a bootstrap
//! sensitivity analysis provide robustness checks, and a synthetic generator
//! with planted effects serves as an end-to-end oracle.

pub mod anova;
pub mod bootstrap;
pub mod calibrate;
pub mod error;
pub mod fmt;
pub mod ingest;
pub mod matching;
pub mod model;
pub mod numstats;
pub mod posthoc;
pub mod rng;
pub mod single_factor;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    aggregate_groups, validate_dataset, Attribute, AttributeSchema, DecisionRecord, GroupRow,
    GroupTable, Label, LabelFilter, SampleRecord, ValidationReport,
};
