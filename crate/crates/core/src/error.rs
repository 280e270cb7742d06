use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid order alpha = {0}: orders must exceed -1")]
    InvalidOrder(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rho/8pi = {rho_over_8pi} lies on the critical set (nearest element {nearest})")]
    CriticalRho { rho_over_8pi: f64, nearest: f64 },

    #[error("series truncation overflow: {terms} terms exceed the cap of {cap}")]
    TruncationOverflow { terms: usize, cap: usize },

    #[error("integer coefficient overflow while expanding the generating function")]
    CoefficientOverflow,

    #[error("undersampled grid: {0}")]
    Undersampled(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("grid mismatch between fields")]
    GridMismatch,

    #[error("non-positive smooth factor K = {value} at node {node}")]
    NonPositiveK { node: usize, value: f64 },

    #[error("integral of h e^u is not positive/finite ({0})")]
    NonIntegrable(f64),

    #[error("degenerate Morse data: {0}")]
    DegenerateMorse(String),

    #[error("solver hit max_iter = {iterations} with residual {residual:e}")]
    MaxIter { iterations: usize, residual: f64 },

    #[error("points collide (separation {0:e})")]
    Collision(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("potential is not axially symmetric: {0}")]
    NotAxisymmetric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
