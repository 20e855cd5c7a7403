//! Multi-object vehicle detection and tracking that fuses a low-framerate
//! image/detection stream with a microsecond-resolution event stream.
//!
//! The pipeline ingests synchronized frame detections and DVS events, slices
//! them into moving window frames at a configurable tracking rate, and runs a
//! tracking-by-detection loop where frame detections seed object templates
//! (event masks) that are correlated against the live event field to localize
//! objects between frames, recover missed detections, and refine bounding
//! boxes. Evaluation (HOTA family) and homography-based distance estimation
//! close the loop against ground truth.
//!
//! Module map:
//! - [`stream_io`]: event/detection/frame/manifest parsing, MOT output
//! - [`windowing`]: window-frame schedule and temporal event weighting
//! - [`masks`]: event-based and edge-based object templates
//! - [`detector`]: sliding-window correlation detection and recovery
//! - [`refine`]: event-guided bounding-box refinement
//! - [`tracker`]: association, track lifecycle, per-window orchestration
//! - [`metrics`]: IoU and the HOTA metric family
//! - [`geometry`] / [`series`]: pixel-to-distance validation pipeline
//! - [`synth`]: deterministic synthetic scene generator for testing
//! - [`pipeline`]: end-to-end runs driven by a serialized configuration

pub mod assignment;
pub mod detector;
pub mod error;
pub mod geometry;
pub mod masks;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod series;
pub mod stream_io;
pub mod synth;
pub mod tracker;
pub mod types;
pub mod windowing;

pub use error::{Error, Result};
pub use types::{BBox, DetectionRecord, Event, GrayImage, PixelRect, Polarity, SequenceManifest};
