use thiserror::Error;

use crate::lattice::Site;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A law, experiment or solver configuration is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A site or space-time point was queried outside the region that stores it.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}, tolerance {tol:e})")]
    NonConvergence { iterations: usize, residual: f64, tol: f64 },

    #[error("dense solve refused: {size} unknowns exceeds the limit of {limit}")]
    TooLarge { size: usize, limit: usize },

    /// A walk reached the edge of the stored environment box.
    #[error("walk truncated at site {site:?} (environment box too small)")]
    Truncated { site: Site },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("rate fit failed: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain_err(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
