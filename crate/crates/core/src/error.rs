use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fairness quota {sigma} outside [0, {max}]")]
    InvalidQuota { sigma: f64, max: f64 },

    #[error("selection cardinality k={k} invalid for K={clients}")]
    InvalidCardinality { k: usize, clients: usize },

    #[error("weight of client {index} is not a positive finite number ({value})")]
    InvalidWeight { index: usize, value: f64 },

    #[error("learning rate eta={0} must lie in (0, 1)")]
    InvalidEta(f64),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("probability {0} must be positive for a selected client")]
    NonPositiveProbability(f64),

    #[error("no cap value satisfies its case premise (weights={weights:?}, k={k}, sigma={sigma})")]
    NoValidAlpha { weights: Vec<f64>, k: usize, sigma: f64 },

    #[error("exponential weight of client {index} overflowed to a non-finite value")]
    NonFiniteWeight { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("client weights sum to {0}, expected 1")]
    WeightSum(f64),

    #[error("invalid population: {0}")]
    InvalidPopulation(String),

    #[error("invalid dataset request: {0}")]
    InvalidDataset(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot compare runs: {0}")]
    MismatchedRuns(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config emit error: {0}")]
    ConfigEmit(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
