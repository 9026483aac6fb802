use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("evidence step must be non-negative and finite, got {0}")]
    NegativeStep(f64),

    #[error("unknown trainer `{0}`")]
    UnknownTrainer(String),

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("goal is unreachable from cell ({x}, {y})")]
    UnreachableCell { x: usize, y: usize },

    #[error("start pool is empty")]
    EmptyStartPool,

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("query failed: {0}")]
    Query(String),

    #[error("malformed table {path}: {reason}")]
    MalformedTable { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
