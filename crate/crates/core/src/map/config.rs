use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::default_background_labels;

/// Association, clustering, and filtering parameters for map building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Neighbor radius for the volumetric overlap ratio, meters.
    pub delta_nn: f64,
    /// Minimum symmetric overlap for merging a detection into a node.
    pub tau_geo: f64,
    /// Minimum semantic similarity (`[0, 1]` scale) for any merge.
    pub tau_sem: f64,
    /// Minimum symmetric overlap for merging two nodes during refinement.
    pub tau_refine: f64,
    pub voxel_size: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    /// Nodes with fewer points are dropped by `finalize`.
    pub min_points: usize,
    /// Nodes fused from fewer detections are dropped by `finalize`.
    pub min_detections: usize,
    pub background_labels: BTreeSet<String>,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            delta_nn: 0.05,
            tau_geo: 0.25,
            tau_sem: 0.75,
            tau_refine: 0.25,
            voxel_size: 0.025,
            dbscan_eps: 0.075,
            dbscan_min_pts: 10,
            min_points: 25,
            min_detections: 1,
            background_labels: default_background_labels(),
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau_geo", self.tau_geo),
            ("tau_sem", self.tau_sem),
            ("tau_refine", self.tau_refine),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("delta_nn", self.delta_nn),
            ("voxel_size", self.voxel_size),
            ("dbscan_eps", self.dbscan_eps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if self.dbscan_min_pts == 0 {
            return Err(Error::param("dbscan_min_pts", "must be >= 1"));
        }
        Ok(())
    }

    pub(crate) fn folded_background(&self) -> BTreeSet<String> {
        self.background_labels.iter().map(|l| l.to_lowercase()).collect()
    }
}
