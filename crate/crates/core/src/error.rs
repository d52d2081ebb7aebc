use thiserror::Error;

use crate::geometry::RegionPath;

#[derive(Debug, Error)]
pub enum MraError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("location {index} lies outside the domain")]
    OutsideDomain { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative argument {0} to correlation function")]
    NegativeDistance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("knot matrix of region {0} is singular after maximum jitter")]
    SingularKnots(RegionPath),

    #[error("leaf covariance of region {0} is not positive definite after maximum jitter")]
    LeafNotPositiveDefinite(RegionPath),

    #[error("posterior precision of region {0} is not positive definite")]
    PosteriorNotPositiveDefinite(RegionPath),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("oracle size cap exceeded: {size} > {cap}")]
    OracleCap { size: usize, cap: usize },

    #[error("innovation variance became non-positive at step {0}; autocovariance is not valid")]
    InvalidAutocovariance(usize),

    #[error("circulant embedding is indefinite after padding to {0}; try a larger padding factor")]
    IndefiniteEmbedding(usize),

    #[error("log-likelihood is not finite at the initial parameters")]
    NonFiniteStart,

    #[error("task for region {path} panicked: {message}")]
    WorkerPanic { path: RegionPath, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MraError>;
