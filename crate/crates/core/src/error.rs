use std::path::PathBuf;

use thiserror::Error;

use crate::process::ProcessState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation diverged at t = {}", last_finite.t)]
    Diverged { last_finite: Box<ProcessState> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("insufficient flux: {crossings} crossings of lambda_0 after {steps} steps (wanted {wanted})")]
    InsufficientFlux {
        crossings: usize,
        wanted: usize,
        steps: u64,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("unknown category {value} in column {column}")]
    UnknownCategory { column: String, value: f64 },

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("all {0} tuning trials failed")]
    AllTrialsFailed(usize),

    #[error("missing cell: model {model} has no entry for dataset {dataset}")]
    MissingCell { model: String, dataset: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Parse(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by user-supplied configuration rather than by a
    /// failing computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Parse(_) => true,
            Error::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
