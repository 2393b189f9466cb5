//! Tracking-by-detection toolkit: teacher-embedding distillation for
//! training data, anchor labelling and losses for a joint detector/embedder,
//! detection post-processing, an online appearance + motion tracker, and
//! MOT evaluation.

pub mod anchors;
pub mod distill;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod postprocess;
pub mod rng;
pub mod selftest;
pub mod tracker;

pub use geometry::{iou, BBox, ScoredDetection};
