use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. Every variant is tagged with the module
/// that produced it so front ends can report failures by stage.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid caller input (bad parameter, precondition violated).
    #[error("[{module}] invalid input: {message}")]
    InvalidInput { module: &'static str, message: String },

    /// Dimension of a point or basis does not match the space.
    #[error("[{module}] dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch {
        module: &'static str,
        expected: usize,
        got: usize,
    },

    /// A numerical procedure failed to reach its tolerance.
    #[error("[{module}] numerical failure: {message}")]
    Numerical { module: &'static str, message: String },

    /// Reading or writing an artifact failed.
    #[error("[io] {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidInput {
            module,
            message: message.into(),
        }
    }

    pub(crate) fn numerical(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            module,
            message: message.into(),
        }
    }

    /// Module tag of the failing stage (`"io"` for I/O errors).
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidInput { module, .. }
            | Error::DimensionMismatch { module, .. }
            | Error::Numerical { module, .. } => module,
            Error::Io(_) => "io",
        }
    }

    /// True for errors caused by caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput { .. } | Error::DimensionMismatch { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
