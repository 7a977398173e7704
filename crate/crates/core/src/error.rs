use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// The variants are grouped so that front ends can map them onto exit
/// codes: [`Error::is_numerical`] separates accuracy failures from input
/// problems.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("capability error: kernel `{kernel}` provides derivatives up to order {max}, order {requested} requested")]
    Capability { kernel: String, max: usize, requested: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("integrability error: {0}")]
    Integrability(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("quadrature did not reach tolerance: estimate {estimate:e}, error bound {error_bound:e} ({detail})")]
    Accuracy { estimate: f64, error_bound: f64, detail: String },

    #[error("circulant embedding has a negative eigenvalue {min_eigenvalue:e} (max {max_eigenvalue:e}); use the cholesky method instead")]
    CirculantEmbedding { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("resource error: {0}")]
    Resource(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of numerical accuracy or consistency, as opposed to
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Accuracy { .. } | Error::CirculantEmbedding { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
