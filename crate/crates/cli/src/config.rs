//! Run configuration for `fairlens audit`.

use std::path::{Path, PathBuf};

use fairlens_core::bootstrap::BootstrapConfig;
use fairlens_core::calibrate::DetectorConfig;
use fairlens_core::matching::MatchSpec;
use fairlens_core::posthoc::{LsMeanMode, WaldDistribution};
use fairlens_core::{Error, LabelFilter, Result};
use serde::{Deserialize, Serialize};

fn default_alpha() -> f64 {
    0.05
}

fn yes() -> bool {
    true
}

/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scores: PathBuf,
    pub schema: PathBuf,
    /// Not part of the run identity; may be overridden on the command line.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    /// Detectors to audit; every detector in the score file with default
    /// settings when empty.
    #[serde(default)]
    pub detectors: Vec<DetectorConfig>,
    /// Model factors; every schema attribute when empty.
    #[serde(default)]
    pub factors: Vec<String>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub label_filter: LabelFilter,
    #[serde(default)]
    pub lsmeans_mode: LsMeanMode,
    #[serde(default)]
    pub wald_distribution: WaldDistribution,
    #[serde(default = "yes")]
    pub single_factor: bool,
    #[serde(default)]
    pub matching: Option<MatchSpec>,
    #[serde(default)]
    pub bootstrap: Option<BootstrapConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut config: RunConfig = fairlens_core::ingest::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.scores = resolve(base, &config.scores);
        config.schema = resolve(base, &config.schema);
        config.output_dir = config.output_dir.map(|p| resolve(base, &p));
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        if let Some(b) = &self.bootstrap {
            if b.replicates == 0 {
                return Err(Error::InvalidConfig("bootstrap replicates must be at least 1".into()));
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
