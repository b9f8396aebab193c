use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown factor `{0}`")]
    UnknownFactor(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("parse error at line {line}, column `{column}`: {message}")]
    Parse {
        line: usize,
        column: String,
        message: String,
    },

    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("record `{text_id}`: attribute `{attribute}` has undeclared or missing level `{level}`")]
    UndeclaredLevel {
        text_id: String,
        attribute: String,
        level: String,
    },

    #[error("{context}: empty input")]
    EmptyInput { context: &'static str },

    #[error("record `{text_id}` belongs to detector `{found}`, expected `{expected}`")]
    DetectorMismatch {
        text_id: String,
        expected: String,
        found: String,
    },

    #[error("invalid degrees of freedom: {0}")]
    InvalidDf(f64),

    #[error("zero residual degrees of freedom (n = {n}, rank = {rank})")]
    ZeroResidualDf { n: usize, rank: usize },

    #[error("factor `{factor}` has {observed} observed level(s); at least 2 are required")]
    DegenerateFactor { factor: String, observed: usize },

    #[error("factor `{0}` is not part of the fitted model")]
    FactorNotInModel(String),

    #[error("level `{level}` of factor `{factor}` is not estimable in the fitted model")]
    NotEstimable { factor: String, level: String },

    #[error("contrast {level_a} vs {level_b} of `{factor}` has non-positive variance {variance:e}")]
    SingularContrastVariance {
        factor: String,
        level_a: String,
        level_b: String,
        variance: f64,
    },

    #[error("invalid p-value input: {0}")]
    InvalidP(String),

    #[error("group `{group}` has {count} observation(s); at least 2 are required")]
    TooFewObservations { group: String, count: usize },

    #[error("no bootstrap replicate produced an estimate for `{0}`")]
    NoSuccessfulReplicates(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
