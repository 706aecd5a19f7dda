use thiserror::Error;

/// Errors raised by the optimizer and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrboError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("covariance factorization failed with jitter {jitter:e}: {reason}")]
    Factorization { jitter: f64, reason: String },

    #[error("objective evaluation failed: {0}")]
    Objective(String),
}

pub type Result<T> = std::result::Result<T, CrboError>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CrboError::DimensionMismatch { expected, got })
    }
}

macro_rules! contract {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err($crate::error::CrboError::Contract(format!($($arg)+)));
        }
    };
}
pub(crate) use contract;
