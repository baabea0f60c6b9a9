use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward called on a tensor that does not depend on any parameter")]
    Detached,

    #[error("learning-rate schedule is defined for step >= 1, got step 0")]
    ZeroStep,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("waveform of {samples} samples is shorter than one {window}-sample analysis window")]
    TooShort { samples: usize, window: usize },

    #[error("label sequence of length {labels} needs at least {required} frames, have {frames}")]
    InfeasibleAlignment {
        labels: usize,
        required: usize,
        frames: usize,
    },

    #[error("word {0:?} is not in the lexicon")]
    UnknownWord(String),

    #[error("unknown symbol {0:?}")]
    UnknownSymbol(char),

    #[error("{path}:{line}: malformed manifest row: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("training diverged at step {step}: {what} is not finite")]
    Diverged { step: u64, what: String },

    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("wav: {0}")]
    Wav(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
