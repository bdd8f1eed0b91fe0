use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The Cole-Hopf variable lost positivity at time index `step`.
    #[error("non-positive Cole-Hopf variable at time index {step} (min value {min:e})")]
    NonPositivePhi { step: usize, min: f64 },

    #[error("linear solve failed after {iterations} iterations (relative residual {residual:e})")]
    LinearSolveFailure { iterations: usize, residual: f64 },

    #[error("Newton iteration diverged at time index {step} (residual {residual:e})")]
    NewtonDivergence { step: usize, residual: f64 },

    #[error("no step tau^i with i <= {max_power} satisfies the QAG condition")]
    QagExhausted { max_power: u32 },

    #[error("optimality gap requested without a reference solution")]
    MissingReference,

    #[error("reference mismatch: {0}")]
    ReferenceMismatch(String),

    #[error("failed to parse {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("invalid value for `{key}`: {message}")]
    Validation { key: String, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors raised by the PDE solvers and step rules during an iteration.
    pub fn is_solver_error(&self) -> bool {
        matches!(
            self,
            Error::NonPositivePhi { .. }
                | Error::LinearSolveFailure { .. }
                | Error::NewtonDivergence { .. }
                | Error::QagExhausted { .. }
        )
    }
}
