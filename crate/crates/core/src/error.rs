use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("image too small: {width}x{height}, need at least {min_width}x{min_height}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },

    #[error("region {what} lies outside the {width}x{height} image")]
    OutOfBounds { what: String, width: usize, height: usize },

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty image")]
    EmptyImage,

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("parse error at line {line}: {reason}")]
    ParseAt { line: u64, reason: String },

    #[error("unsupported cascade feature: {0}")]
    UnsupportedFeature(String),

    #[error("no corner candidates on the contour")]
    NoCandidates,

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("no detection/truth pairs to score")]
    NoPairs,

    #[error("synthetic geometry error: {0}")]
    Geometry(String),

    #[error("annotation for image {image_id} lies outside its {width}x{height} bounds")]
    Bounds {
        image_id: String,
        width: usize,
        height: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Decode { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}
