//! Vessel contour segmentation and tracking for ultrasound B-scan sequences.
//!
//! A sequence is processed frame by frame: block-mean downsampling, a
//! bilateral filter, variance-root clustering and a feature asymmetry map,
//! then either seeded segmentation (first frame) or Kalman-filter tracking
//! with a cluster-root fallback (later frames). [`phantom`] generates
//! speckled test sequences with exact ground truth and [`metrics`] scores
//! results against it.

pub mod api;
pub mod config;
pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod phantom;
pub mod phase;
pub mod pipeline;
pub mod preprocess;
pub mod segmentation;
pub mod tracking;

pub use config::{Preset, SequenceConfig};
pub use error::{Error, Result};
pub use image::{GrayImage, Point};
pub use pipeline::{run_sequence, ContourResult, SequenceTracker};
pub use tracking::SeedSource;
