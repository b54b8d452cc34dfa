use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants fall into two families that the CLI maps onto exit codes:
/// input problems (configuration, parsing, validation, lookup, file format)
/// and numeric failures (factorization breakdown, non-finite values).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("unknown task id {0}")]
    UnknownTask(u32),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }

    pub(crate) fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}

impl Error {
    /// Prefixes the message with a location, keeping the variant.
    pub(crate) fn at(self, place: impl std::fmt::Display) -> Self {
        match self {
            Error::Config(m) => Error::Config(format!("{place}: {m}")),
            Error::Validation(m) => Error::Validation(format!("{place}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{place}: {m}")),
            Error::Dimension { context, expected, actual } => Error::Dimension {
                context: format!("{place}: {context}"),
                expected,
                actual,
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
