use thiserror::Error;

/// Errors raised by the C3T library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code profile: {0}")]
    InvalidProfile(String),

    #[error("degenerate curve: derivative of order {order} is linearly dependent on lower orders at alpha = {alpha}")]
    DegenerateCurve { order: usize, alpha: f64 },

    #[error("geometric degeneracy at delta = {delta}: circumradius denominator vanishes")]
    GeometricDegeneracy { delta: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined angle for coordinate pair {pair}: pair norm is zero")]
    UndefinedAngle { pair: usize },

    #[error("rate equals capacity: block length is unbounded")]
    RateEqualsCapacity,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch} with learning rate {learning_rate}")]
    TrainingDiverged { epoch: usize, learning_rate: f64 },

    #[error("objective evaluation failed at iteration {iteration}: {source}")]
    Objective {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
