use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("no pixel size in file header and no override given")]
    MissingPixelSize,

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row}: {reason}")]
    Render { row: usize, reason: String },

    #[error("cannot locate two modes")]
    NoTwoModes,

    #[error("no line found in column profile")]
    NoLineFound,

    #[error("edge detection unreliable: {rejected} of {rows} rows rejected for edge {edge}")]
    EdgeDetectionUnreliable {
        edge: usize,
        rejected: usize,
        rows: usize,
    },

    #[error("index {index} out of range ({len} lines)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("trace length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("trace too short: {0} points (need an even length of at least 64)")]
    TraceTooShort(usize),

    #[error("too few usable PSD bins: {0} (need 16)")]
    TooFewBins(usize),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
