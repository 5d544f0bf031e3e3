use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("invalid bipartition: {0}")]
    InvalidBipartition(String),

    #[error("malformed input at line {line}: {reason}")]
    MalformedInput { line: usize, reason: String },

    #[error("red node {node} is already adjacent to every blue node")]
    CapacityExceeded { node: usize },

    #[error("node {node} is not a red node")]
    NotRed { node: usize },

    #[error("linear solve failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    SolverFailure { residual: f64, tolerance: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("generation failed: {0}")]
    GenerationFailed(String),

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
