use std::io;

use thiserror::Error;

/// Errors raised by the voting engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid vote field spec: {0}")]
    InvalidSpec(String),

    #[error("ring selection is empty or names rings the field does not have")]
    EmptySelection,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("tensor contains non-finite values")]
    NonFinite,

    #[error("point ({y}, {x}) lies outside a {height}x{width} map")]
    OutOfBounds {
        y: usize,
        x: usize,
        height: usize,
        width: usize,
    },

    #[error("unknown backend `{0}` (expected scatter, gather, kernel or sparse)")]
    UnknownBackend(String),

    #[error("not a permutation of 0..{0}")]
    NotAPermutation(usize),

    #[error("bad magic: expected HVT1")]
    BadMagic,

    #[error("truncated tensor file")]
    TruncatedFile,

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("unsupported rank {0} (expected 1..=4)")]
    UnsupportedRank(usize),

    #[error("{0} unexpected trailing bytes after tensor payload")]
    TrailingBytes(usize),

    #[error("underlay image is {got:?}, heatmap is {expected:?}")]
    ImageSizeMismatch {
        expected: (u32, u32),
        got: (u32, u32),
    },

    #[error("invalid label map: {0}")]
    InvalidLabels(String),

    #[error("backends disagree: relative error {error:e} exceeds {tolerance:e}")]
    BackendDisagreement { error: f64, tolerance: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Broad error families, used by front ends to pick exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidSpec(_)
            | Error::EmptySelection
            | Error::UnknownBackend(_)
            | Error::InvalidLabels(_)
            | Error::Json(_) => ErrorKind::Config,
            Error::Io(_) | Error::Image(_) => ErrorKind::Io,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
