//! Library side of the `fairlens` command-line tool: run configuration,
//! table rendering and the full audit pipeline.

pub mod audit;
pub mod config;
pub mod render;

use std::fmt;

use fairlens_core::anova::AnovaTable;
use fairlens_core::numstats::WlsFit;
use fairlens_core::Error;
use serde::{Deserialize, Serialize};

pub use audit::{run_full_audit, RunManifest};
pub use config::RunConfig;

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FAIRLENS_THREADS";

/// A fitted model together with the ANOVA table that gates its post-hoc
/// analyses. Written by `fairlens anova --fit-out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBundle {
    pub detector: String,
    pub fit: WlsFit,
    pub anova: AnovaTable,
}

/// A failure tagged with the pipeline stage it happened in. Displays as
/// the one-line JSON object printed on stderr.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl StageError {
    pub fn new(stage: &'static str, error: Error) -> Self {
        StageError { stage, error }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "stage": self.stage, "error": self.error.to_string() })
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_json())
    }
}

impl std::error::Error for StageError {}

/// `map_err` adapter tagging an error with `stage`.
pub fn at(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |e| StageError::new(stage, e)
}

/// Worker count from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
}
