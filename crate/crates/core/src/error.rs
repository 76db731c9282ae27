//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration failure at t = {t} ns: {reason}")]
    IntegrationFailure { reason: String, t: f64 },

    #[error("steady state did not converge within {t_max} ns (residual {residual:.3e})")]
    ConvergenceFailure { t_max: f64, residual: f64 },

    #[error("trace drift {drift:.3e} exceeds limit {limit:.3e}; step size too large")]
    TraceDrift { drift: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. } | Error::ConvergenceFailure { .. } | Error::TraceDrift { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
