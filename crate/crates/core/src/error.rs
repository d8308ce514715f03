use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("invalid geometry in {op}: {detail}")]
    InvalidGeometry { op: &'static str, detail: String },

    #[error("cannot normalize the zero quaternion")]
    ZeroQuaternion,

    #[error("loss must be a scalar node, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("empty target sequence")]
    EmptyTarget,

    #[error("symbol index {index} is not a valid label (blank = {blank}, labels = {n_labels})")]
    InvalidSymbol { index: usize, blank: usize, n_labels: usize },

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("target of length {target_len} needs at least {required} frames, got {frames}")]
    InfeasibleAlignment { target_len: usize, required: usize, frames: usize },

    #[error("batch example {index}: {source}")]
    BatchExample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("audio: {0}")]
    Audio(String),

    #[error("utterance of {samples} samples is shorter than one {window}-sample window")]
    TooShort { samples: usize, window: usize },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("checkpoint was written for a different model configuration")]
    ConfigMismatch,

    #[error("non-finite gradient in parameter `{param}` ({count} bad values)")]
    NonFinite { param: String, count: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }

    pub(crate) fn geometry(op: &'static str, detail: impl Into<String>) -> Self {
        Error::InvalidGeometry { op, detail: detail.into() }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by bad numbers rather than bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::ZeroQuaternion)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
