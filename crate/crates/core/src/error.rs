use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick exit codes and status codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments, contradictory configuration, malformed requests.
    Validation,
    /// Missing, corrupt or insufficient data.
    Data,
    /// An optimizer failed to converge or produced non-finite values.
    Convergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("path does not exist: {0}")]
    MissingPath(PathBuf),
    #[error("no valid sample found in {0}")]
    EmptyCorpus(String),
    #[error("schema violation in {file}:{line}: {message}")]
    SchemaViolation {
        file: String,
        line: usize,
        message: String,
    },
    #[error("degenerate trace: {0}")]
    DegenerateTrace(String),
    #[error("screen dimensions must be positive")]
    ZeroScreen,
    #[error("accelerometer trace is empty")]
    EmptyTrace,
    #[error("swipe starts and ends at the same point; move efficiency is undefined")]
    ZeroDistance,
    #[error("non-finite feature value at index {0}")]
    NonFiniteFeature(usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("feature mode mismatch: expected {expected}, got {actual}")]
    ModeMismatch { expected: String, actual: String },
    #[error("prior has not been fitted: {0}")]
    PriorUnfit(String),
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("forward cache does not belong to this network")]
    StaleCache,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-finite {which} loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        which: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("model has not been trained")]
    UntrainedModel,
    #[error("training set contains a single class")]
    SingleClassTrainingSet,
    #[error("SMO did not converge after {iterations} iterations (violation gap {gap:.3e})")]
    SmoNonConvergence { iterations: usize, gap: f64 },
    #[error("k = {k} exceeds training set size {n}")]
    KExceedsTrainingSize { k: usize, n: usize },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("evaluation set contains a single class; AUC is undefined")]
    SingleClassEvalSet,
    #[error("contradictory configuration: {0}")]
    ConfigContradiction(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("malformed request: {0}")]
    MalformedRequest(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            ModeMismatch { .. }
            | ShapeMismatch(_)
            | ConfigContradiction(_)
            | InvalidConfig(_)
            | KExceedsTrainingSize { .. }
            | MalformedRequest(_)
            | ZeroScreen
            | NonPositiveDuration(_)
            | DegenerateTrace(_)
            | ZeroDistance => ErrorClass::Validation,
            SmoNonConvergence { .. } | NonFiniteLoss { .. } => ErrorClass::Convergence,
            _ => ErrorClass::Data,
        }
    }
}
