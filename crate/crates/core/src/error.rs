use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u32 },

    #[error("dimension overflow: {rows} x {cols} does not fit in memory")]
    DimensionOverflow { rows: u64, cols: u64 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing data after payload ({extra} bytes)")]
    TrailingData { extra: u64 },

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("line {line}, field {field}: cannot parse {text:?} as a number")]
    NonNumeric {
        line: usize,
        field: usize,
        text: String,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("class label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {class} has a single sample and cannot be stratified")]
    SingletonClass { class: usize },

    #[error("shape mismatch in {context}: {detail}")]
    Shape { context: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive-definite")]
    NotPositiveDefinite,

    #[error("SVD did not converge for a {rows} x {cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("symmetric eigendecomposition did not converge")]
    EigenNoConvergence,

    #[error("missing model entry {0:?}")]
    MissingEntry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            context,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
