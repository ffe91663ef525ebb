use std::path::PathBuf;

use crate::se3::Pose;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numerical failure at frame {frame}: {reason}")]
    NumericalFailure { frame: usize, reason: String },

    #[error("insufficient correspondences for pair ({i}, {j}): {found} usable pairs, need 3")]
    InsufficientCorrespondences { i: usize, j: usize, found: usize },

    #[error("registration failed for pair ({i}, {j}): {reason}")]
    RegistrationFailure { i: usize, j: usize, reason: String },

    #[error("relative chain has gaps at frames {0:?}")]
    Gap(Vec<usize>),

    #[error("pose graph component containing frames {first}..={last} has no active absolute edge")]
    UnanchoredGraph { first: usize, last: usize },

    #[error("optimization failed after {iterations} iterations: {reason}")]
    OptimizationFailure {
        iterations: usize,
        reason: String,
        last: Vec<Pose>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: unsupported format: {message}")]
    Format { path: PathBuf, message: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid synthetic sequence spec: {0}")]
    InvalidSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalFailure { .. }
                | Error::RegistrationFailure { .. }
                | Error::OptimizationFailure { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
