//! Online single-object tracking by detection with a small multi-cue CNN that is
//! trained from scratch on each video.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision used by the tracker (`f32`) and by gradient verification (`f64`).

pub mod cnn;
pub mod config;
pub mod container;
pub mod cue;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod loss;
pub mod pool;
pub mod scalar;
pub mod sequence;
pub mod synth;
pub mod trainer;
pub mod tracker;

pub use error::{Result, TrackError};
pub use scalar::Scalar;

pub use config::TrackerConfig;

/// Tracker precision.
pub type Model = cnn::CnnModel<f32>;
pub type Tracker = tracker::Tracker<f32>;
pub type Frame = cue::RawFrame<f32>;
pub type BBox = geometry::BBox<f64>;

/// Verification precision.
pub type Model64 = cnn::CnnModel<f64>;
pub type Tracker64 = tracker::Tracker<f64>;
