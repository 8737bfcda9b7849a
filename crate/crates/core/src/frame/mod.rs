//! Frame records: posed depth images plus the open-set detections extracted
//! from the matching color image.

mod mask;
mod parse;
mod write;

use std::collections::BTreeSet;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};

pub use mask::InstanceMask;
pub use parse::{parse_frame_record, parse_header, read_frame_file, FrameSequence};
pub use write::{frame_record_json, header_json, sequence_sha256, write_depth_png, write_frame_file};

pub const SCHEMA_VERSION: u32 = 1;

/// Labels dropped before mapping unless configured otherwise.
pub const DEFAULT_BACKGROUND_LABELS: [&str; 4] = ["wall", "floor", "ceiling", "office"];

pub fn default_background_labels() -> BTreeSet<String> {
    DEFAULT_BACKGROUND_LABELS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub(crate) fn check(&self) -> std::result::Result<(), &'static str> {
        if self.width == 0 || self.height == 0 {
            return Err("image size must be positive");
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err("focal lengths must be positive");
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err("cx outside image");
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err("cy outside image");
        }
        Ok(())
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub translation: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    /// Quaternion as `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Row-major 16-bit depth in millimeters; zero marks an invalid pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub values: Vec<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub label: String,
    pub bbox: BBox,
    /// Detector confidence already squashed to `[0, 1]`.
    pub confidence: f64,
    pub mask: InstanceMask,
    /// Image-text aligned embedding, unit norm. Used for querying.
    pub clip_embedding: Vec<f64>,
    /// Self-supervised visual embedding, unit norm. Used for merge gating.
    pub dino_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub frame_id: u64,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub depth: DepthImage,
    pub detections: Vec<Detection>,
}

/// First line of a frame-record file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceHeader {
    pub schema_version: u32,
    pub d_clip: usize,
    pub d_dino: usize,
}

impl SequenceHeader {
    pub fn new(d_clip: usize, d_dino: usize) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            d_clip,
            d_dino,
        }
    }
}

/// Keeps detections whose case-folded label is not in `blocklist`.
/// Blocklist entries are case-folded too; matching is exact, never substring.
pub fn filter_background<'a>(
    detections: impl IntoIterator<Item = &'a Detection>,
    blocklist: &BTreeSet<String>,
) -> Vec<Detection> {
    let folded: BTreeSet<String> = blocklist.iter().map(|l| l.to_lowercase()).collect();
    detections
        .into_iter()
        .filter(|d| !is_background(&d.label, &folded))
        .cloned()
        .collect()
}

pub(crate) fn is_background(label: &str, folded_blocklist: &BTreeSet<String>) -> bool {
    folded_blocklist.contains(&label.to_lowercase())
}
