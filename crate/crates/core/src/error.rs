use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("point is off the level manifold: constraint {constraint} violated by {value:e}")]
    OffManifold { constraint: String, value: f64 },

    #[error("chart point leaves the admissible region: free radius r_{plane} = {radius:e} below r_min = {r_min:e}")]
    ChartGuard { plane: usize, radius: f64, r_min: f64 },

    #[error("implicit midpoint stage did not converge at step {step} after {iterations} iterations")]
    ImplicitStage { step: usize, iterations: usize },

    #[error("search result is not converged (residual {residual:e})")]
    NotConverged { residual: f64 },

    #[error("unknown reference shape `{0}`")]
    UnknownShape(String),

    #[error("config file {} not found or unreadable: {source}", path.display())]
    ConfigMissing {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed config {}: {message}", path.display())]
    ConfigMalformed { path: PathBuf, message: String },

    #[error("invalid config field `{field}`: {reason}")]
    ConfigInvalid { field: String, reason: String },

    #[error("cannot write {}: {message}", path.display())]
    Output { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (config or parameter
    /// validation), as opposed to numerical or I/O failures.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid { .. }
                | Error::ConfigMissing { .. }
                | Error::ConfigMalformed { .. }
                | Error::ConfigInvalid { .. }
                | Error::UnknownShape(_)
        )
    }
}
