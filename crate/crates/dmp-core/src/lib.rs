//! Dual-memory label propagation engine for video sequences.
//!
//! Given a sequence of frames and labels for the first frame (an object
//! mask, keypoints, or nothing but the frames' own colors), the engine
//! propagates labels frame by frame. Each query frame is matched against two
//! memory banks — a short-term bank gated by feature-peak motion and a
//! long-term bank gated by reconstruction agreement — through two branches:
//! a plain joint-softmax affinity over every remembered frame, and a
//! prediction branch that sharpens the query's features via frame-region
//! clustering (forward path) and restricts affinities to matched clusters
//! (backward path). The branches are fused by reconstruction-loss weights
//! and the fused affinity carries the labels across.

pub mod affinity;
pub mod clustering;
pub mod color;
pub mod config;
pub mod descriptor;
pub mod error;
pub mod feature;
pub mod fixture;
pub mod io;
pub mod label;
pub mod memory;
pub mod metrics;
pub mod pipeline;
pub mod prediction;

pub use error::{Error, Result};
