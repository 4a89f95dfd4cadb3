use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    /// Orientation rules produced a cycle or a new v-structure, so the input
    /// admits no consistent DAG extension.
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("cycle detected: {0}")]
    Cycle(String),

    #[error("discovered edge ratio is undefined for a graph with no edges")]
    UndefinedRatio,

    #[error("extension count exceeds cap of {cap}")]
    CapacityExceeded { cap: u64 },

    #[error("no action available: every edge is already oriented")]
    NoAction,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("calibration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("selection exceeded timeout of {seconds} s")]
    Timeout { seconds: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
