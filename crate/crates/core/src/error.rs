use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent shapes, unsupported options, bad hyperparameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or incompatible input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("singular pairwise interaction: particles {i} and {j} coincide")]
    Singularity { i: usize, j: usize },

    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:e})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        param_norm: f64,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
