use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the inversion pipeline.
///
/// The variants are grouped by category so that the command-line front end
/// can map them onto distinct exit codes (see [`Error::category`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("degenerate iterate: the current map is identically zero, regularization parameters are undefined")]
    DegenerateIterate,

    #[error("solver diverged at iteration {iteration}: non-finite iterate")]
    Diverged { iteration: usize },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("plot error on {}: {message}", path.display())]
    Plot { path: PathBuf, message: String },
}

/// Coarse error classes used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Solver,
    Io,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::MissingFile { .. } => ErrorCategory::Config,
            Error::Parse { .. } | Error::Data(_) | Error::Dimension { .. } => ErrorCategory::Data,
            Error::DegenerateIterate | Error::Diverged { .. } => ErrorCategory::Solver,
            Error::Io { .. } | Error::Plot { .. } => ErrorCategory::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}
