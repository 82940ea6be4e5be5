use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackError {
    #[error("frame is {width}x{height}, both sides must be at least 32")]
    FrameTooSmall { width: usize, height: usize },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("box lies entirely outside the {width}x{height} frame")]
    BoxOutsideFrame { width: usize, height: usize },
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("frame index {got} does not follow {last}")]
    FrameOrder { last: usize, got: usize },
    #[error("sample pool has no {0} samples")]
    EmptyPool(&'static str),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged: non-finite loss at step {0}")]
    Diverged(usize),
    #[error("container format: {0}")]
    Format(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TrackError>;
