use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough spread in the data to identify shape and scale.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate component {component}: {reason}")]
    DegenerateComponent { component: usize, reason: String },

    #[error("root solve failed: {0}")]
    SolveFailed(String),

    #[error("constrained update failed for component {component}: {reason}")]
    ConstrainedUpdate { component: usize, reason: String },

    #[error("invalid mode bounds: {0}")]
    InvalidBounds(String),

    #[error("{context}: {message}")]
    Io { context: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
