use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: fields live on different grids")]
    GridMismatch,

    #[error("step size {dt} exceeds the stability limit {dt_max}")]
    StepTooLarge { dt: f64, dt_max: f64 },

    #[error("non-finite value in {context} at t = {t}")]
    NonFinite { context: &'static str, t: f64 },

    #[error("envelope time {actual} does not match eps^2 t = {expected}")]
    Unsynchronized { expected: f64, actual: f64 },

    #[error("degenerate denominator in {what}: {value:e}")]
    DegenerateDenominator { what: &'static str, value: f64 },

    #[error("band support violated: {0}")]
    SupportViolation(String),

    #[error("phase denominator {value:e} at (k, l) = ({k}, {l}) for branches {branches}")]
    KernelDenominator {
        k: f64,
        l: f64,
        value: f64,
        branches: String,
    },

    #[error("fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("log-log fit needs positive data, got ({x}, {y})")]
    NonPositiveData { x: f64, y: f64 },

    #[error("time stamps are not strictly increasing at index {0}")]
    NonMonotoneTime(usize),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution check failed: {0}")]
    Unresolved(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error at {path}: {message}")]
    Serialize { path: PathBuf, message: String },
}

impl Error {
    /// True for failures caused by the numerics rather than by inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::KernelDenominator { .. }
                | Error::Unresolved(_)
                | Error::DegenerateDenominator { .. }
                | Error::SupportViolation(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
