//! Sub-6 GHz aided near-field mmWave beam selection with conformal risk
//! control.

pub mod array;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod crc;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod predictor;
pub mod rng;
pub mod selection;

pub use channel::{ChannelPair, PathParams, ScenarioSample};
pub use codebook::{BeamIndex, PolarCodebook};
pub use config::{GeometryConfig, SystemConfig, SystemParams};
pub use crc::{CalibrationMode, CalibrationRecord, ThresholdResult};
pub use dataset::Dataset;
pub use error::*;
pub use num_complex::Complex64;
pub use predictor::{BeamPredictor, ProbabilityMatrix, ScoreMatrix};
pub use selection::{Branch, CandidateSet, SelectionOutcome};
