use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong while building meshes, assembling, or stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("Jacobi preconditioner: zero diagonal entry in row {row}")]
    Preconditioner { row: usize },

    #[error("model assumption violated ({assumption}): {detail}")]
    ModelAssumption {
        assumption: &'static str,
        detail: String,
    },

    #[error("model evaluated outside its domain: {0}")]
    ModelDomain(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (solver, model, geometry) as opposed
    /// to bad user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::Convergence { .. }
                | Error::Preconditioner { .. }
                | Error::ModelAssumption { .. }
                | Error::ModelDomain(_)
                | Error::Resource(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
