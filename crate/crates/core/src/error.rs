use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible uncertainty set: {0}")]
    Infeasible(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("supremum attained at the grid boundary (z = {at}); conjugate may be infinite")]
    BoundaryAttained { at: f64 },

    #[error("degenerate class means: both are zero")]
    DegenerateMean,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: unknown label {label:?} (pass a label mapping)")]
    UnknownLabel { line: usize, label: String },

    #[error("cannot split data: {0}")]
    Split(String),

    #[error("empty data set")]
    EmptyData,

    #[error("no bracket found for the inner minimization within |z| <= 1e6")]
    Divergence,

    #[error("outside the differentiable regime: {0}")]
    OutsideRegime(String),

    #[error("feasibility violation: {0}")]
    Feasibility(String),

    #[error("solver did not converge after {iterations} iterations (gap {gap:e})")]
    NonConvergence { iterations: usize, gap: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::ParameterDomain(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Divergence => 3,
            _ => 2,
        }
    }
}
