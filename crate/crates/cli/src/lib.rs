//! Batch harness: dataset generation, splitting, calibration, evaluation,
//! parameter sweeps and covariate-shift studies.

pub mod commands;
pub mod experiment;
pub mod pool;
pub mod report;
pub mod stats;

pub use experiment::{ExperimentConfig, PredictorSpec, RatioMode, ShiftSpec, SweepAxis, SweepSpec};

use nearbeam_core::{ChannelError, ConfigError, CrcError, DatasetError, PredictError, SelectionError};
use thiserror::Error;

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "NEARBEAM_WORKERS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    System(#[from] ConfigError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Crc(#[from] CrcError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("calibration report does not match this evaluation: {0}")]
    Mismatch(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
