use std::path::PathBuf;

use thiserror::Error;

use crate::label::Label;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("input contains no data rows")]
    EmptyFile,
    #[error("utilization {value} outside [0, 100] at line {line}")]
    OutOfRange { line: usize, value: f64 },
    #[error("hour index {hour} at line {line} does not increase")]
    NonMonotonicTime { line: usize, hour: i64 },
    #[error("class {0} has too few members")]
    ClassAbsent(Label),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("need at least k={k} training points, got {got}")]
    TooFewPoints { k: usize, got: usize },
    #[error("training set contains a single class")]
    SingleClassTraining,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("calibration set is empty")]
    EmptyCalibration,
    #[error("test set is empty")]
    EmptyTest,
    #[error("disk {0} is not a concern disk")]
    NotConcern(u64),
    #[error("invalid threshold policy: {0}")]
    InvalidPolicy(String),
    #[error("series has {0} observations, need at least 2")]
    SeriesTooShort(usize),
    #[error("forecast model has no observed transitions")]
    UnfittedModel,
    #[error("invalid forecast parameters: {0}")]
    InvalidForecast(String),
    #[error("invalid scheduler configuration: {0}")]
    InvalidSchedulerConfig(String),
    #[error("no actual utilization recorded for hour {0}")]
    MissingActuals(i64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True when the failure stems from user-supplied input rather than a bug or
    /// environment fault. The CLI maps this to exit code 2.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. } => false,
            Error::InFile { source, .. } => source.is_input_error(),
            _ => true,
        }
    }

    /// Attaches the offending file to parse errors; I/O errors already carry one.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        match self {
            e @ (Error::Io { .. } | Error::InFile { .. } | Error::MissingArtifact(_)) => e,
            e => Error::InFile {
                path: path.into(),
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
