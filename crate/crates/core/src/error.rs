use thiserror::Error;

/// Errors raised by the model, detector and experiment layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    #[error("unsupported QAM order {0} (must be an even power of two, at least 4)")]
    QamOrder(u32),
    #[error("symbol vector is not in the signal space: {0}")]
    NotInSignalSpace(String),
    #[error("expected {expected} bits, got {got}")]
    BitCount { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is singular: {0}")]
    Singular(&'static str),
    #[error("search space of {size} vectors exceeds the cap of {cap}")]
    SearchSpaceTooLarge { size: f64, cap: u64 },
    #[error("LAS did not terminate within {0} iterations")]
    MaxIterations(usize),
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
