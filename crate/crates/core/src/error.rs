use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the anonymization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("value {value} outside axis range [{min}, {max}]")]
    OutOfBounds { value: f64, min: f64, max: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trajectory file has no data rows")]
    EmptyTrajectory,

    #[error("k-anonymity infeasible: {available} trajectories for k = {k}")]
    Infeasible { k: usize, available: usize },

    #[error("refusing to publish: cluster of {size} members is below k = {k}")]
    Undersized { size: usize, k: usize },

    #[error("cannot compare reports: {0}")]
    Comparison(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
