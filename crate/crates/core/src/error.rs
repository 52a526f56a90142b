use thiserror::Error;

/// Errors raised by solvers, samplers and validators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("state space too large: {size} states exceeds cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("missing cached value: {0}")]
    MissingCache(String),

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
