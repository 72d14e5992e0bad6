use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("market potential {value} is not positive at day {day}")]
    NonPositivePotential { day: usize, value: f64 },

    #[error("complement potential alpha*m = {value} is below the floor")]
    DegeneratePotential { value: f64 },

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty series: {0}")]
    EmptySeries(String),

    #[error("degenerate series '{0}': cannot rescale a constant series")]
    DegenerateSeries(String),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("missing value in column '{column}' at day {day}")]
    MissingValue { column: String, day: usize },

    #[error("window violation: {0}")]
    WindowViolation(String),

    #[error("cumulative series '{series}' decreases at day {day}")]
    NonMonotoneCumulative { series: String, day: usize },

    #[error("explosive trajectory: {rejections} of {draws} state draws rejected")]
    ExplosiveTrajectory { rejections: usize, draws: usize },

    #[error("numerical blowup at step {step}: variance {variance}")]
    NumericalBlowup { step: usize, variance: f64 },

    #[error("chain diverged at iteration {iteration}")]
    ChainDiverged { iteration: usize },

    #[error("prior misconfiguration: {0}")]
    PriorMisconfiguration(String),

    #[error("rank-deficient design matrix ({rows}x{cols})")]
    RankDeficientDesign { rows: usize, cols: usize },

    #[error("non-finite deviance")]
    NonFiniteDeviance,

    #[error("unknown variant '{0}'")]
    UnknownVariant(String),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("horizon mismatch: {0}")]
    HorizonMismatch(String),

    #[error("missing archive in {0}")]
    MissingArchive(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
