use thiserror::Error;

use crate::trace::PageId;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum PagingError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("page id {page} outside [1, {n}]")]
    PageOutOfRange { page: u64, n: usize },

    #[error("round {round} outside [1, {len}]")]
    RoundOutOfRange { round: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver aborted in round {round}: {reason}")]
    SolverAbort { round: usize, reason: String },

    #[error("infeasible row in round {round}: rhs {rhs} exceeds {active} active variables")]
    InfeasibleRow { round: usize, rhs: i64, active: usize },

    #[error("rounding invariant violated in round {round}: {reason}")]
    InvariantViolation { round: usize, reason: String },

    #[error("trajectory corrupted in round {round}: eviction probability {probability} for page {page}")]
    TrajectoryCorruption {
        round: usize,
        page: PageId,
        probability: f64,
    },

    #[error("search space too large: {0}")]
    SearchSpace(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("metadata error: {0}")]
    Metadata(String),

    #[error("policy interface violation: {0}")]
    Interface(String),

    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),

    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PagingError>;
