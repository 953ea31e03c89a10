//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data; `line` is 1-based.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("label count {labels} does not match point count {points}")]
    LengthMismatch { labels: usize, points: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("convex hull needs at least 4 points, got {0}")]
    TooFewPoints(usize),

    #[error("requested {requested} candidates but the cloud has only {available} points")]
    NotEnoughPoints { requested: usize, available: usize },

    #[error("sample set is empty")]
    EmptySamples,

    #[error("training class `{0}` is empty")]
    EmptyClass(&'static str),

    #[error("stem sample validation failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    #[error(
        "leaf/stem training sets overlap too much: dropped {dropped} of {set_size} {set} points"
    )]
    OverlapTooLarge {
        set: &'static str,
        dropped: usize,
        set_size: usize,
    },

    #[error("internal hull construction failure: {0}")]
    HullInternal(&'static str),

    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

/// Rejects zero, negative, and NaN values in one place.
pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be > 0, got {value}")))
    }
}
