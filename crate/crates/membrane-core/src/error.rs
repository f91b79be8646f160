use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid domain spec: {0}")]
    InvalidSpec(&'static str),
    #[error("domain mask has no interior cells")]
    EmptyDomain,
    #[error("fields live on incompatible domains")]
    DomainMismatch,
    #[error("field has {got} values, domain has {expected} cells")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("negative value at cell {cell}: {value}")]
    Negative { cell: usize, value: f64 },
    #[error("force must be non-negative and not identically zero")]
    InvalidForce,
    #[error("generator values must be non-negative and not all zero")]
    InvalidGenerator,
    #[error("solver tolerance must lie in (0, 1)")]
    InvalidTolerance,
    #[error("solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("system lost positive definiteness at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("dense solver handles at most {limit} cells, domain has {got}")]
    TooLargeForDense { limit: usize, got: usize },
    #[error("exhaustive search handles at most {limit} cells, domain has {got}")]
    TooLargeForBruteForce { limit: usize, got: usize },
    #[error("cell index {index} out of range for domain with {cells} cells")]
    CellIndexOutOfRange { index: usize, cells: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
