use std::fmt;

use owl_core::OwlError;

/// Failure of a command, classified by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad or inconsistent arguments (exit 2).
    Usage(String),
    /// Unreadable or malformed input data (exit 3).
    Data(String),
    /// The estimation itself failed (exit 4).
    Fit(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Fit(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Fit(m) => write!(f, "fit failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<OwlError> for CliError {
    fn from(e: OwlError) -> Self {
        match e {
            OwlError::InvalidInput(_) | OwlError::InvalidParams(_) => CliError::Usage(e.to_string()),
            OwlError::Data(m) => CliError::Data(m),
            OwlError::Dimension { .. } => CliError::Data(e.to_string()),
            OwlError::FitFailed(m) => CliError::Fit(m),
            OwlError::Singular(_) | OwlError::IllConditioned { .. } => CliError::Fit(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
