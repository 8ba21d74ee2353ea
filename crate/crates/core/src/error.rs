use thiserror::Error;

use crate::data::DataError;
use crate::hermite::HermiteError;
use crate::linops::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),

    #[error(transparent)]
    Hermite(#[from] HermiteError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The training kernel is not invertible above the rank tolerance, so no
    /// exact interpolator exists.
    #[error("singular kernel: smallest eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    SingularKernel { min_eigenvalue: f64, tolerance: f64 },

    #[error("models were fitted with different feature maps")]
    MapMismatch,

    #[error("degenerate alignment denominator {value:e} (threshold {threshold:e}){}",
        .trial.map(|t| format!(" at trial {t}")).unwrap_or_default())]
    DegenerateDenominator {
        value: f64,
        threshold: f64,
        trial: Option<usize>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
