//! Spatial kernels over point clouds. Everything here is a pure function.

mod dbscan;
mod overlap;
mod spatial;
mod voxel;

use nalgebra::Point3;

pub use dbscan::{dbscan, largest_cluster, ClusterLabels};
pub use overlap::{nnratio, symmetric_overlap};
pub use spatial::PointIndex;
pub use voxel::{voxel_downsample, voxel_key};

use crate::error::{Error, Result};
use crate::frame::{CameraIntrinsics, DepthImage, Pose};

pub type Point = Point3<f64>;

/// Depth image units per meter.
pub const DEPTH_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point::from(sum / self.points.len() as f64))
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Axis-aligned box in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = nalgebra::Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }

    pub fn center(&self) -> Point {
        nalgebra::center(&self.min, &self.max)
    }
}

pub fn aabb_of(cloud: &PointCloud) -> Result<Aabb> {
    let first = cloud
        .points
        .first()
        .ok_or(Error::UndefinedInput("bounding box of an empty cloud"))?;
    let (min, max) = cloud.points.iter().fold((*first, *first), |(lo, hi), p| {
        (lo.inf(p), hi.sup(p))
    });
    Ok(Aabb { min, max })
}

/// Back-projects the given pixels through a pinhole model into the camera
/// frame (x right, y down, z forward). Zero-depth pixels are skipped.
pub fn back_project(depth: &DepthImage, k: &CameraIntrinsics, pixels: &[u32]) -> PointCloud {
    let width = depth.width;
    pixels
        .iter()
        .filter_map(|&idx| {
            let raw = *depth.values.get(idx as usize)?;
            if raw == 0 {
                return None;
            }
            let d = raw as f64 / DEPTH_SCALE;
            let u = (idx % width) as f64;
            let v = (idx / width) as f64;
            Some(Point::new((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d))
        })
        .collect()
}

/// Maps a camera-frame cloud into the world frame.
pub fn transform(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    let iso = pose.isometry();
    cloud.points.iter().map(|p| iso * p).collect()
}
