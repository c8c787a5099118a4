use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("zero CFR entry at row {row}, column {col}")]
    ZeroEntry { row: usize, col: usize },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("too few realizations: need at least 2, got {0}")]
    TooFewRealizations(usize),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is indefinite: eigenvalue {min_eigenvalue:e} below tolerance {tolerance:e}")]
    IndefiniteMatrix { min_eigenvalue: f64, tolerance: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("slope distribution has no samples to resample from")]
    EmptySlopeSamples,

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("noise covariance is not positive definite at tone {tone}")]
    SingularNoise { tone: usize },

    #[error("frequency grids are not compatible: {0}")]
    GridMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
