use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("operator is not positive definite (curvature {curvature:e} at iteration {iteration}); alpha is likely below the spectral norm of A_tau")]
    IndefiniteOperator { curvature: f64, iteration: usize },

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("oracle error rate is undefined when eta + theta = 0")]
    UndefinedErrorRate,

    #[error("lambda = 0 makes the regularized system singular; use the spectral clustering baseline instead")]
    ZeroLambda,

    #[error("no labeled nodes: {0}")]
    NoLabels(&'static str),

    #[error("instance too large for exhaustive enumeration: n = {n} > {max}")]
    TooLarge { n: usize, max: usize },

    #[error("evaluation scope is empty")]
    EmptyScope,

    #[error("experiment spec: {0}")]
    Spec(String),

    #[error("csv schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
