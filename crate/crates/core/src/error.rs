use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OwlError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("ill-conditioned kernel system (condition number {condition:.3e}): {detail}")]
    IllConditioned { condition: f64, detail: String },

    #[error("fit failed: {0}")]
    FitFailed(String),
}

pub type Result<T> = std::result::Result<T, OwlError>;

pub(crate) fn check_len(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected != got {
        return Err(OwlError::Dimension { expected, got, context });
    }
    Ok(())
}
