use super::{spatial::PointIndex, PointCloud};
use crate::error::{Error, Result};
use crate::union_find::UnionFind;

pub const NOISE: i32 = -1;

/// Per-point cluster assignment: `-1` for noise, otherwise `0..num_clusters`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub labels: Vec<i32>,
    pub num_clusters: usize,
}

impl ClusterLabels {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }
}

/// Density-based clustering with a closed `eps` neighborhood that counts the
/// point itself.
///
/// Produces the same labels as the classic sequential algorithm scanning
/// points in index order: clusters are numbered by their lowest-index core
/// point, and a border point reachable from several clusters joins the one
/// with the lowest id.
pub fn dbscan(cloud: &PointCloud, eps: f64, min_pts: usize) -> Result<ClusterLabels> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::param("dbscan_eps", format!("must be > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::param("dbscan_min_pts", "must be >= 1"));
    }
    let n = cloud.len();
    let index = PointIndex::new(&cloud.points, eps);

    let mut neighbors: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut scratch = Vec::new();
    for p in &cloud.points {
        index.within(p, &mut scratch);
        neighbors.push(scratch.clone());
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut uf = UnionFind::new(n);
    for i in (0..n).filter(|&i| core[i]) {
        for &j in &neighbors[i] {
            let j = j as usize;
            if j > i && core[j] {
                uf.union(i, j);
            }
        }
    }

    let mut labels = vec![NOISE; n];
    let mut root_label = vec![NOISE; n];
    let mut num_clusters = 0usize;
    for i in (0..n).filter(|&i| core[i]) {
        let r = uf.find(i);
        if root_label[r] == NOISE {
            root_label[r] = num_clusters as i32;
            num_clusters += 1;
        }
        labels[i] = root_label[r];
    }
    for i in (0..n).filter(|&i| !core[i]) {
        labels[i] = neighbors[i]
            .iter()
            .filter(|&&j| core[j as usize])
            .map(|&j| labels[j as usize])
            .min()
            .unwrap_or(NOISE);
    }
    Ok(ClusterLabels {
        labels,
        num_clusters,
    })
}

/// Points of the most populous cluster (lowest id on ties); empty when every
/// point is noise.
pub fn largest_cluster(cloud: &PointCloud, labels: &ClusterLabels) -> PointCloud {
    let sizes = labels.cluster_sizes();
    let Some(best) = sizes
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.cmp(b).then(ib.cmp(ia)))
        .filter(|(_, &s)| s > 0)
        .map(|(i, _)| i as i32)
    else {
        return PointCloud::default();
    };
    cloud
        .points
        .iter()
        .zip(&labels.labels)
        .filter(|(_, &l)| l == best)
        .map(|(p, _)| *p)
        .collect()
}
