use thiserror::Error;

use crate::rootfind::RootTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("{what} has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("invalid noise model: noise PSD must be > 0, got {0}")]
    InvalidNoise(f64),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    #[error("price must be > 0, got {0}")]
    UninitializedPrice(f64),

    #[error("bandwidth must be > 0, got {0}")]
    Domain(f64),

    #[error("no interior root")]
    NoInteriorRoot,

    #[error("root finder hit the iteration cap of {cap}")]
    MaxIterations { cap: usize, trace: Box<RootTrace> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
