//! Multi-user detection and ranging from low-resolution thermal array frames.
//!
//! Frames flow through [`preprocess`] into the [`spatial`] detector, are tied
//! together over time by the [`tracker`] and [`fusion`] stages inside
//! [`pipeline::Pipeline`], and each user region is ranged by a gradient-boosted
//! regressor over pooled ROI temperatures ([`ranging`], [`gbrt`]). The
//! [`simulator`] renders labeled synthetic scenes.

pub mod applications;
pub mod config;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod gbrt;
pub mod io;
pub mod pipeline;
pub mod preprocess;
pub mod ranging;
pub mod simulator;
pub mod spatial;
pub mod tracker;
pub mod types;

pub use error::{Error, ErrorKind, Result};
pub use types::{
    BBox, Detection, FrameDetections, GrayFrame, Grid, GroundTruthRecord, RawFrame, Roi, SensorSpec,
    Subpage, TargetTruth, TemperatureMap,
};
