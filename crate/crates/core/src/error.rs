//! Error type shared by all modules.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("no frame files in {0}")]
    EmptyDirectory(PathBuf),

    #[error("frame {frame} is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    InconsistentDimensions {
        frame: String,
        want_w: u32,
        want_h: u32,
        got_w: u32,
        got_h: u32,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("invalid ground truth for {video_id}: {msg}")]
    InvalidGroundTruth { video_id: String, msg: String },

    #[error("landmark set has {got} points, expected 68")]
    WrongLandmarkCount { got: usize },

    #[error("negative landmark coordinate ({x}, {y}) at index {index}")]
    NegativeLandmark { index: usize, x: f64, y: f64 },

    #[error("degenerate crop box (left {left}, top {top}, right {right}, bottom {bottom})")]
    DegenerateBox {
        left: i64,
        top: i64,
        right: i64,
        bottom: i64,
    },

    #[error("crop box ({left}, {top})..({right}, {bottom}) outside {width}x{height} frame")]
    BoxOutOfBounds {
        left: i64,
        top: i64,
        right: i64,
        bottom: i64,
        width: u32,
        height: u32,
    },

    #[error("frame dimensions differ: {a_w}x{a_h} vs {b_w}x{b_h}")]
    DimensionMismatch {
        a_w: u32,
        a_h: u32,
        b_w: u32,
        b_h: u32,
    },

    #[error("empty input to {op}")]
    EmptyInput { op: &'static str },

    #[error("expected {expected} block values, got {got}")]
    WrongBlockCount { expected: usize, got: usize },

    #[error("video {video_id} has {n} frames, too short for k={k}")]
    VideoTooShort {
        video_id: String,
        n: usize,
        k: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown profile `{0}` (builtin: casme2, samm)")]
    UnknownProfile(String),

    #[error("invalid synthesis spec: {0}")]
    SynthSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
