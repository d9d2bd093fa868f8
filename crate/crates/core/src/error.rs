use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation: {0}")]
    Validation(String),

    #[error("{path}: row {row}: {message}")]
    Data {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("collinear design: dropped columns [{}]", .columns.join(", "))]
    Collinear { columns: Vec<String> },

    #[error("separation: coefficient on `{covariate}` diverges")]
    Separation { covariate: String },

    #[error("no convergence after {iterations} iterations (last gradient sup-norm {gradient_norm:.3e}); trace tail {trace:?}")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        trace: Vec<f64>,
    },

    #[error("equilibrium did not converge after {iterations} iterations; residual trace tail {trace:?}")]
    EquilibriumNonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("unstable equilibrium parameters: {0}")]
    Unstable(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
