use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or index outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input file; the message names the offending record.
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("Krylov step did not converge: residual estimate {residual:.3e} above tolerance {tol:.3e}")]
    NoConvergence { residual: f64, tol: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
