use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, PointCloud};

/// Where a fused detection came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub frame_id: u64,
    pub detection: u32,
}

/// One object instance in the map.
///
/// Candidates built from a single detection use the same type; their
/// `node_id` is assigned when they are inserted into a map.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub node_id: u32,
    /// World frame, voxel-downsampled.
    pub cloud: PointCloud,
    pub clip_embedding: Vec<f64>,
    pub dino_embedding: Vec<f64>,
    pub bbox: Aabb,
    pub source_frames: Vec<SourceRef>,
    pub label_histogram: BTreeMap<String, u32>,
}

impl SceneNode {
    pub fn point_count(&self) -> usize {
        self.cloud.len()
    }

    pub fn num_detections(&self) -> usize {
        self.source_frames.len()
    }

    /// Most frequent label; lexicographically smallest on ties.
    pub fn dominant_label(&self) -> &str {
        self.label_histogram
            .iter()
            .max_by(|(la, ca), (lb, cb)| ca.cmp(cb).then(lb.cmp(la)))
            .map_or("", |(l, _)| l.as_str())
    }
}
