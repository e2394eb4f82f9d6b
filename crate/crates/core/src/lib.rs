//! Desk-scale simulation of an uncertainty-driven annotation workflow for
//! 3D semantic segmentation.
//!
//! Synthetic phantom volumes stand in for CT scans, a small differentiable
//! voxel classifier stands in for a segmentation network, and an oracle
//! annotator stands in for human experts. On top of those, the crate
//! implements the full active-learning loop: weighted soft Dice training on
//! partial annotations, Monte-Carlo dropout predictive entropy, slice- and
//! volume-level query strategies with annotation-effort budgeting, and
//! surface-distance evaluation metrics with significance testing.

pub mod error;
pub mod experiment;
pub mod metrics;
pub mod sampling;
pub mod stream;
pub mod uncertainty;
pub mod learner;
pub mod volume;

pub use error::{Error, Result};
