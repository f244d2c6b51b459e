use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the placement library.
#[derive(Debug, Error)]
pub enum EcpError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid placement: {0}")]
    InvalidPlacement(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("leader-based objective requires a leader")]
    MissingLeader,

    #[error("cluster {cluster} has no posterior mass")]
    DegenerateCluster { cluster: usize },

    #[error("instance too large for exhaustive search: {candidates} candidates (limit {limit})")]
    TooLarge { candidates: usize, limit: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = EcpError> = std::result::Result<T, E>;
