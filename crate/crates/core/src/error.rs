use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("unstable: spectral radius {0} is not below 1")]
    Unstable(f64),
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("{0} is not positive semidefinite")]
    NotPositiveSemidefinite(&'static str),
    #[error("{0} is not symmetric")]
    NotSymmetric(&'static str),
    #[error("(A, B) is not stabilizable: {0}")]
    NotStabilizable(&'static str),
    #[error("iteration did not converge: {0}")]
    NoConvergence(&'static str),
    #[error("rank-deficient design: rank {rank} but {required} columns")]
    RankDeficient { rank: usize, required: usize },
    #[error("sample count {got} below the required minimum {required}")]
    TooFewSamples { got: usize, required: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("margin violated: {quantity} = {value} but must be below {limit}")]
    Margin { quantity: &'static str, value: f64, limit: f64 },
    #[error("bootstrap trial {trial} stayed rank-deficient after {attempts} attempts")]
    BootstrapRank { trial: usize, attempts: usize },
    #[error("malformed program: {0}")]
    Program(String),
    #[error("solver failed at gamma = {gamma}: {reason}")]
    Solver { gamma: f64, reason: String },
    #[error("controller does not stabilize the nominal model (spectral radius {0})")]
    NotStabilizing(f64),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;
