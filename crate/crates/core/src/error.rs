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

    #[error("malformed weight file: {0}")]
    Parse(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Value(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("symbolic pixel set is empty")]
    EmptySymbolicSet,

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("perturbing pixel {pixel} by {step} flips the activation pattern")]
    PatternFlip { pixel: usize, step: f64 },

    #[error("target label {0} equals the original label")]
    SameLabel(usize),

    #[error("percentage {0} outside (0, 100]")]
    InvalidPercent(f64),

    #[error("invalid range: lo={lo}, hi={hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("image has {0} pixels, which is not a 28x28 grid")]
    NonSquare(usize),

    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },

    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("unexpected IDX dimensions {rows}x{cols}, expected 28x28")]
    UnexpectedDimensions { rows: u32, cols: u32 },

    #[error("label value {0} exceeds 9")]
    LabelValue(u8),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
