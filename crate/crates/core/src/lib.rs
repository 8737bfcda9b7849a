//! Open-set 3D semantic instance mapping.
//!
//! Posed RGB-D frames with per-detection masks and embeddings are fused into
//! a map of object instances, each a world-frame point cloud with averaged
//! embeddings. The map answers embedding queries and produces reachable
//! navigation goals on an inflated occupancy grid.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod embedding;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod map;
pub mod nav;
pub mod ply;
pub mod synth;
pub mod union_find;

pub use error::{Error, Result};
