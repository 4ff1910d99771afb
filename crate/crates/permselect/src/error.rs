//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

/// Errors produced by dataset handling, statistical routines, model
/// fitting, and the pipeline harness.
#[derive(Debug)]
pub enum Error {
    /// Malformed or inconsistent input (bad dimensions, out-of-range
    /// parameters, non-finite values, ...).
    InvalidInput(String),
    /// CSV parsing failure; `line` is 1-based and counts the header.
    Csv { line: usize, message: String },
    /// Configuration file or command-line flag problem.
    Config(String),
    /// An iterative solver ran out of iterations.
    Convergence(String),
    /// A linear system could not be factorized.
    Singular(String),
    /// I/O failure, with the path that was being accessed.
    Io { path: PathBuf, source: std::io::Error },
    /// A pipeline stage failed; wraps the underlying error.
    Stage { stage: &'static str, source: Box<Error> },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::Csv { line, message } => write!(f, "csv error at line {line}: {message}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Convergence(msg) => write!(f, "convergence failure: {msg}"),
            Error::Singular(msg) => write!(f, "singular system: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {}: {source}", path.display()),
            Error::Stage { stage, source } => write!(f, "{stage} stage: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            Error::Stage { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
