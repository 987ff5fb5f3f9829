use thiserror::Error;

/// Errors produced by the bell-lab engines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("enumeration of {count} strategies exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("model is not covariant ({violations} violating entries)")]
    NotCovariant { violations: usize },

    #[error("stage {stage} is starved: needs {needed} bits, {available} available")]
    SeedStarvation {
        stage: usize,
        needed: f64,
        available: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
