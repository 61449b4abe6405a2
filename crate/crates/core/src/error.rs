use thiserror::Error;

/// Errors raised anywhere in the estimation stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Moments that cannot come from points on the unit circle.
    #[error("inconsistent moments: {0}")]
    Inconsistent(String),

    /// A numerical routine failed; `stage` names where.
    #[error("estimation failed in {stage}: {message}")]
    Estimation { stage: String, message: String },

    /// Malformed or invalid input data.
    #[error("validation error: {0}")]
    Validation(String),

    /// Parse failure in a text input, with a 1-based line number.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub fn estimation(stage: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Estimation {
            stage: stage.into(),
            message: message.into(),
        }
    }

    /// Prefix the stage label of an estimation error; other variants pass through.
    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            Error::Estimation { stage: inner, message } => Error::Estimation {
                stage: format!("{stage}/{inner}"),
                message,
            },
            Error::Domain(m) | Error::Inconsistent(m) => Error::estimation(stage, m),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
