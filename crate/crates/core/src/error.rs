use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("step probability {prob:e} left [1e-12, 1-1e-12] at row {row}")]
    DegenerateStep { row: usize, prob: f64 },

    #[error("density underflow at bin {bin}: p = {prob:e}")]
    NonpositiveDensity { bin: usize, prob: f64 },

    #[error("population exceeded the cap of {cap} at t = {time:.3}")]
    Explosion { cap: u64, time: f64 },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("method {method} needs {field}, which the dataset does not carry")]
    MissingAugmentation {
        method: &'static str,
        field: &'static str,
    },

    #[error("dataset is incompatible with {method}: {reason}")]
    IncompatibleData {
        method: &'static str,
        reason: String,
    },

    #[error("model was trained against reference {trained}, asked for {requested}")]
    ReferenceMismatch { trained: String, requested: String },

    #[error("no calibration stored for θ0 = {theta0}, θ1 = {theta1}")]
    NotCalibrated { theta0: String, theta1: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parameter grid needs at least two points")]
    GridTooCoarse,

    #[error("reference undefined at evaluation point {0}")]
    UndefinedReference(usize),

    #[error("ensemble member {index} failed: {source}")]
    EnsembleMember {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{what} digest mismatch: header says {expected}, content hashes to {actual}")]
    DigestMismatch {
        what: &'static str,
        expected: String,
        actual: String,
    },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("not found: {0}")]
    NotFound(PathBuf),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Process exit codes of the command-line driver.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
    pub const NOT_FOUND: i32 = 5;
}

impl Error {
    /// Samples failing this way are dropped from datasets rather than aborting.
    pub fn is_invalid_sample(&self) -> bool {
        matches!(self, Error::Explosion { .. })
    }

    pub fn exit_code(&self) -> i32 {
        use exit_code::*;
        match self {
            Error::NotFound(_) => NOT_FOUND,
            Error::Config(_)
            | Error::Unsupported(_)
            | Error::GridTooCoarse
            | Error::ReferenceMismatch { .. }
            | Error::NotCalibrated { .. } => CONFIG,
            Error::DegenerateStep { .. }
            | Error::NonpositiveDensity { .. }
            | Error::Explosion { .. }
            | Error::NonFinite(_) => NUMERIC,
            Error::EnsembleMember { source, .. } => source.exit_code(),
            Error::DimensionMismatch { .. }
            | Error::MissingAugmentation { .. }
            | Error::IncompatibleData { .. }
            | Error::Empty(_)
            | Error::UndefinedReference(_)
            | Error::DigestMismatch { .. }
            | Error::Corrupt { .. }
            | Error::Io { .. }
            | Error::Json(_) => DATA,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path)
        } else {
            Error::Io { path, source }
        }
    }
}
