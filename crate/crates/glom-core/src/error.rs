//! Error type shared across the pipeline.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("decode failure for {path}: {reason}")]
    Decode { path: PathBuf, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("dimensions {width}x{height} not divisible by factor {factor}")]
    NonDivisible {
        width: usize,
        height: usize,
        factor: usize,
    },
    #[error("crop {out_h}x{out_w} exceeds image {height}x{width}")]
    CropTooLarge {
        out_h: usize,
        out_w: usize,
        height: usize,
        width: usize,
    },
    #[error("degenerate histogram: image has a single luminance value")]
    DegenerateHistogram,
    #[error("empty mask: no foreground pixels")]
    EmptyMask,
    #[error("degenerate box: zero extent")]
    DegenerateBox,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("bad config: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("unknown patient id: {0}")]
    UnknownPatient(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
