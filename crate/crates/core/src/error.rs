use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("undefined direction: zero-length vector")]
    UndefinedDirection,

    #[error("elevation {0} deg outside [-90, 90]")]
    ElevationOutOfRange(f64),

    #[error("non-finite angle")]
    NonFiniteAngle,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("sample rate mismatch: expected {expected} Hz, got {actual} Hz")]
    SampleRate { expected: u32, actual: u32 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("class {class_id} has two simultaneous tracks at frame {frame}")]
    ClassCollision { frame: usize, class_id: usize },

    #[error("undefined metrics: no reference events")]
    UndefinedMetrics,

    #[error("predictor failed on rotation pattern {pattern}: {source}")]
    Predictor {
        pattern: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown clip identity {0:?}")]
    UnknownClip(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
