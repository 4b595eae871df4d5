//! Motion-aware features and attention-based multiple-instance ranking for
//! weakly supervised video anomaly detection.
//!
//! The crate is organised as a pipeline:
//!
//! * [`nncore`]: tensors, hand-written forward/backward layers, Adagrad.
//! * [`motiondata`]: synthetic videos, block-matching optical flow, flow stacks.
//! * [`tan`]: the flow autoencoder whose pooled bottleneck is the motion feature.
//! * [`mil`]: bags of segment features, the anomaly regressor, attention, ranking losses.
//! * [`eval`]: frame-level ROC/AUC, mode comparisons and reports.
//! * [`pipeline`]: configuration, stages and run manifests behind the CLI.

mod binio;
pub mod error;
pub mod eval;
pub mod mil;
pub mod motiondata;
pub mod nncore;
pub mod pipeline;
pub mod tan;

pub use error::{Error, Result};
