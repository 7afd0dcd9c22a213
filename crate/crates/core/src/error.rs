use thiserror::Error;

/// Errors raised by the library. Each variant maps onto one of the CLI exit
/// classes (validation, non-convergence, size cap).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("depth {depth} out of range (tree depth limit {limit})")]
    DepthOutOfRange { depth: usize, limit: usize },

    #[error("size cap exceeded: {what} needs {needed}, limit is {limit}")]
    SizeCap {
        what: &'static str,
        needed: u128,
        limit: u128,
    },

    #[error("no convergence after {iterations} iterations at eta = {eta:e} (last step {last_step:e})")]
    NoConvergence {
        iterations: usize,
        eta: f64,
        last_step: f64,
    },

    #[error("denominator vanished in recursion map (component {component})")]
    ZeroDenominator { component: usize },

    #[error("depth insufficient: seed sensitivity {sensitivity:e} exceeds {tol:e} at depth {depth} (estimated depth needed: {})", required.map_or("unknown".to_string(), |r| r.to_string()))]
    DepthInsufficient {
        depth: usize,
        sensitivity: f64,
        tol: f64,
        required: Option<usize>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
