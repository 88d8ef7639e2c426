use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shift ({w}, {h}) leaves no overlap on a {width}x{height} map")]
    EmptyRegion {
        w: i32,
        h: i32,
        width: usize,
        height: usize,
    },
    #[error("non-finite value in feature map at index {0}")]
    NonFinite(usize),
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("bad synthetic spec: {0}")]
    BadSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("need at least 2 classes with samples, found {0}")]
    InsufficientClasses(usize),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("empty score set: {0}")]
    EmptyScores(&'static str),
    #[error("numerical divergence: {0}")]
    NumericalDivergence(String),
    #[error("checkpoint version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptFile(String),
    #[error("malformed image {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },
    #[error("malformed csv: {0}")]
    Csv(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse failure class, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Runtime,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch(_)
            | Error::EmptyRegion { .. }
            | Error::NonFinite(_)
            | Error::BadDimensions(_)
            | Error::BadSpec(_)
            | Error::Config(_)
            | Error::ProtocolViolation(_)
            | Error::InsufficientClasses(_)
            | Error::InsufficientSamples(_) => ErrorClass::Validation,
            Error::EmptyScores(_) | Error::NumericalDivergence(_) => ErrorClass::Runtime,
            Error::VersionMismatch(_)
            | Error::CorruptFile(_)
            | Error::MalformedImage { .. }
            | Error::Csv(_)
            | Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Variant name, stable for machine parsing.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::EmptyRegion { .. } => "EmptyRegion",
            Error::NonFinite(_) => "NonFinite",
            Error::BadDimensions(_) => "BadDimensions",
            Error::BadSpec(_) => "BadSpec",
            Error::Config(_) => "Config",
            Error::ProtocolViolation(_) => "ProtocolViolation",
            Error::InsufficientClasses(_) => "InsufficientClasses",
            Error::InsufficientSamples(_) => "InsufficientSamples",
            Error::EmptyScores(_) => "EmptyScores",
            Error::NumericalDivergence(_) => "NumericalDivergence",
            Error::VersionMismatch(_) => "VersionMismatch",
            Error::CorruptFile(_) => "CorruptFile",
            Error::MalformedImage { .. } => "MalformedImage",
            Error::Csv(_) => "Csv",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Csv(e.to_string())
        }
    }
}
