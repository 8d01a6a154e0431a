//! Edge-assisted analytics for 360-degree video.
//!
//! The crate is organised around the per-frame loop of the system:
//!
//! - [`geometry`]: spherical boxes, areas, IoU, NMS and projections.
//! - [`predictor`]: spherical region-of-interest (SRoI) prediction from recent detections.
//! - [`profiles`]: model profiles, accuracy estimation and delay estimation.
//! - [`allocator`]: latency-constrained model allocation with pipelined execution.
//! - [`sim`]: deterministic simulator, synthetic traces and the ERP / CubeMap baselines.
//! - [`eval`]: spherical mAP and latency metrics.

// `!(x > 0.0)` style checks are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod predictor;
pub mod profiles;
pub mod sim;

pub use error::{Error, Result};
