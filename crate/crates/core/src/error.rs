use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid system configuration: {0}")]
    Invalid(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("{band} path {index} has delay {delay:.3e} s beyond the tap span {span:.3e} s")]
    DelayOutOfRange {
        band: &'static str,
        index: usize,
        delay: f64,
        span: f64,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("beam index ({n}, {s}) outside 1..={antennas} x 1..={rings}")]
    Index {
        n: usize,
        s: usize,
        antennas: usize,
        rings: usize,
    },
    #[error("codebook needs at least 2 antennas and 1 ring, got {antennas} x {rings}")]
    Size { antennas: usize, rings: usize },
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("expected {what} of shape {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("predictor needs the mmWave channel, which this input does not carry")]
    MissingChannel,
    #[error("no external probability matrix for sample {0}")]
    MissingSample(u64),
    #[error("invalid probability matrix: {0}")]
    InvalidProbabilities(String),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
}

#[derive(Debug, Error)]
pub enum CrcError {
    #[error("calibration set is empty")]
    Empty,
    #[error("no eps-good beam supplied; the critical score is undefined")]
    EmptyGoodSet,
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error(
        "calibration set of {n_cal} samples is too small for alpha = {alpha}; \
         at least {required} samples are needed"
    )]
    Infeasible {
        n_cal: usize,
        alpha: f64,
        required: usize,
    },
    #[error("invalid importance weight: {0}")]
    Weight(String),
}

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("candidate set is empty and no probability matrix was supplied for the fallback")]
    MissingFallback,
    #[error("pilots_per_beam must be at least 1")]
    Pilots,
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error(transparent)]
    Crc(#[from] CrcError),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a dataset file (bad magic)")]
    Magic,
    #[error("unsupported dataset version {0}")]
    Version(u32),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("header json: {0}")]
    Json(#[from] serde_json::Error),
}
