use thiserror::Error;

use crate::geometry::ChartPoint;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration error at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        /// Samples accepted before the failure.
        partial: Vec<(f64, ChartPoint)>,
    },

    #[error("periodic orbit refinement failed after {iterations} iterations (residual {residual:.3e})")]
    Refinement { iterations: usize, residual: f64 },

    #[error("class error: {0}")]
    Class(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("extraction error: {0}")]
    Extraction(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("residual error: {0}")]
    Residual(String),

    #[error("verification failure: {0}")]
    Verification(String),

    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
