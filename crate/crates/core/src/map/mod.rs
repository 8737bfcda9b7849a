//! The instance map: initialization from a first frame, per-frame
//! merge-or-add association, overlap-based refinement, and filtering.

mod config;
mod export;
mod node;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

pub use config::MergeConfig;
pub use export::{export_map, load_map, node_color, ExportOptions, Manifest, ManifestNode, MANIFEST_FILE};
pub use node::{SceneNode, SourceRef};

use crate::embedding::{semantic_similarity, weighted_fuse};
use crate::error::{Error, Result};
use crate::frame::{is_background, FrameRecord};
use crate::geometry::{
    aabb_of, back_project, dbscan, largest_cluster, symmetric_overlap, transform, voxel_downsample,
    PointCloud,
};
use crate::union_find::UnionFind;

/// Similarity of a candidate to an existing node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    /// Symmetric volumetric overlap in `[0, 1]`.
    pub geo: f64,
    /// Semantic similarity of the visual embeddings in `[0, 1]`.
    pub sem: f64,
    /// Both gates passed.
    pub merge: bool,
}

/// What one `update` did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameStats {
    pub frame_id: u64,
    pub candidates: usize,
    pub merged: usize,
    pub added: usize,
    pub nodes: usize,
}

/// Builds the world-frame object cloud for one detection: back-project the
/// masked pixels, move them into the world frame, voxel-downsample, and keep
/// the largest density cluster.
///
/// Returns `None` for background labels, for detections with too few valid
/// depth pixels, and when clustering finds only noise.
pub fn detection_to_candidate(
    frame: &FrameRecord,
    det_index: usize,
    config: &MergeConfig,
) -> Result<Option<SceneNode>> {
    if det_index >= frame.detections.len() {
        return Err(Error::param(
            "det_index",
            format!("{det_index} out of range for {} detections", frame.detections.len()),
        ));
    }
    candidate_with(frame, det_index, config, &config.folded_background())
}

fn candidate_with(
    frame: &FrameRecord,
    det_index: usize,
    config: &MergeConfig,
    background: &std::collections::BTreeSet<String>,
) -> Result<Option<SceneNode>> {
    let det = &frame.detections[det_index];
    if is_background(&det.label, background) {
        return Ok(None);
    }
    let camera = back_project(&frame.depth, &frame.intrinsics, &det.mask.decode());
    if camera.len() < config.dbscan_min_pts {
        return Ok(None);
    }
    let world = transform(&camera, &frame.pose);
    let sparse = voxel_downsample(&world, config.voxel_size)?;
    let labels = dbscan(&sparse, config.dbscan_eps, config.dbscan_min_pts)?;
    let cloud = largest_cluster(&sparse, &labels);
    if cloud.is_empty() {
        return Ok(None);
    }
    Ok(Some(SceneNode {
        node_id: 0,
        bbox: aabb_of(&cloud)?,
        cloud,
        clip_embedding: det.clip_embedding.clone(),
        dino_embedding: det.dino_embedding.clone(),
        source_frames: vec![SourceRef {
            frame_id: frame.frame_id,
            detection: det_index as u32,
        }],
        label_histogram: BTreeMap::from([(det.label.clone(), 1)]),
    }))
}

/// Scores a candidate against a node. Merging requires both the overlap and
/// the semantic gate to pass.
pub fn match_score(candidate: &SceneNode, node: &SceneNode, config: &MergeConfig) -> Result<MatchScore> {
    let sem = semantic_similarity(&candidate.dino_embedding, &node.dino_embedding)?;
    let geo = overlap(candidate, node, config.delta_nn, config.tau_geo)?;
    Ok(MatchScore {
        geo,
        sem,
        merge: geo >= config.tau_geo && sem >= config.tau_sem,
    })
}

/// Symmetric overlap, short-circuiting to 0 when the boxes (grown by the
/// neighbor radius) are disjoint. That shortcut is exact; it is skipped when
/// a zero threshold would make the value matter anyway.
fn overlap(a: &SceneNode, b: &SceneNode, delta_nn: f64, threshold: f64) -> Result<f64> {
    if threshold > 0.0 && !a.bbox.expanded(delta_nn).intersects(&b.bbox) {
        return Ok(0.0);
    }
    symmetric_overlap(&a.cloud, &b.cloud, delta_nn)
}

/// Fuses `candidate` into `node`, keeping the node's id.
///
/// Embeddings are averaged with weights equal to each side's detection
/// count, then renormalized. If the weighted sum cancels to zero the
/// heavier side's embedding is kept (the node's on a tie).
pub fn merge_into(node: &SceneNode, candidate: &SceneNode, config: &MergeConfig) -> Result<SceneNode> {
    let wn = node.num_detections() as f64;
    let wc = candidate.num_detections() as f64;
    let fuse = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
        if a.len() != b.len() {
            return Err(Error::param("embedding", "dimension mismatch while merging"));
        }
        Ok(weighted_fuse(a, wn, b, wc).unwrap_or_else(|| {
            if wc > wn { b.to_vec() } else { a.to_vec() }
        }))
    };
    let clip_embedding = fuse(&node.clip_embedding, &candidate.clip_embedding)?;
    let dino_embedding = fuse(&node.dino_embedding, &candidate.dino_embedding)?;

    let mut union = node.cloud.points.clone();
    union.extend_from_slice(&candidate.cloud.points);
    let cloud = voxel_downsample(&PointCloud::new(union), config.voxel_size)?;

    let mut label_histogram = node.label_histogram.clone();
    for (label, count) in &candidate.label_histogram {
        *label_histogram.entry(label.clone()).or_default() += count;
    }
    let mut source_frames = node.source_frames.clone();
    source_frames.extend_from_slice(&candidate.source_frames);

    Ok(SceneNode {
        node_id: node.node_id,
        bbox: aabb_of(&cloud)?,
        cloud,
        clip_embedding,
        dino_embedding,
        source_frames,
        label_histogram,
    })
}

/// The evolving set of object instances.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMap {
    nodes: BTreeMap<u32, SceneNode>,
    next_id: u32,
    config: MergeConfig,
    frames_processed: u64,
}

impl InstanceMap {
    pub fn new(config: MergeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            nodes: BTreeMap::new(),
            next_id: 0,
            config,
            frames_processed: 0,
        })
    }

    /// Reassembles a map from stored parts, checking node invariants.
    pub fn from_parts(
        config: MergeConfig,
        nodes: Vec<SceneNode>,
        next_id: u32,
        frames_processed: u64,
    ) -> Result<Self> {
        let mut map = Self::new(config)?;
        for node in nodes {
            if node.node_id >= next_id {
                return Err(Error::State(format!("node id {} not below next_id {next_id}", node.node_id)));
            }
            if node.source_frames.is_empty() || node.cloud.is_empty() {
                return Err(Error::State(format!("node {} has no detections or points", node.node_id)));
            }
            let id = node.node_id;
            if map.nodes.insert(id, node).is_some() {
                return Err(Error::State(format!("duplicate node id {id}")));
            }
        }
        map.next_id = next_id;
        map.frames_processed = frames_processed;
        Ok(map)
    }

    pub fn config(&self) -> &MergeConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn next_id(&self) -> u32 {
        self.next_id
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &SceneNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: u32) -> Option<&SceneNode> {
        self.nodes.get(&id)
    }

    pub fn total_detections(&self) -> usize {
        self.nodes.values().map(SceneNode::num_detections).sum()
    }

    /// Candidates for every surviving detection of `frame`, in detection order.
    pub fn candidates(&self, frame: &FrameRecord) -> Result<Vec<SceneNode>> {
        let background = self.config.folded_background();
        let built: Vec<Result<Option<SceneNode>>> = (0..frame.detections.len())
            .into_par_iter()
            .map(|i| candidate_with(frame, i, &self.config, &background))
            .collect();
        built.into_iter().filter_map(Result::transpose).collect()
    }

    fn insert(&mut self, mut node: SceneNode) -> u32 {
        let id = self.next_id;
        node.node_id = id;
        self.nodes.insert(id, node);
        self.next_id += 1;
        id
    }

    /// Seeds an empty map with one node per surviving candidate of `frame`.
    pub fn initialize(&mut self, frame: &FrameRecord) -> Result<FrameStats> {
        if !self.nodes.is_empty() {
            return Err(Error::State("initialize called on a non-empty map".into()));
        }
        let candidates = self.candidates(frame)?;
        let count = candidates.len();
        for c in candidates {
            self.insert(c);
        }
        self.frames_processed += 1;
        Ok(FrameStats {
            frame_id: frame.frame_id,
            candidates: count,
            merged: 0,
            added: count,
            nodes: self.nodes.len(),
        })
    }

    /// Merges each candidate of `frame` into its best matching node, or adds
    /// it as a new node when no node passes both gates. Candidates are
    /// handled in detection order against the map as updated so far.
    pub fn update(&mut self, frame: &FrameRecord) -> Result<FrameStats> {
        if self.nodes.is_empty() {
            return self.initialize(frame);
        }
        let candidates = self.candidates(frame)?;
        let mut stats = FrameStats {
            frame_id: frame.frame_id,
            candidates: candidates.len(),
            merged: 0,
            added: 0,
            nodes: 0,
        };
        for candidate in candidates {
            match self.best_match(&candidate)? {
                Some(id) => {
                    let fused = merge_into(&self.nodes[&id], &candidate, &self.config)?;
                    self.nodes.insert(id, fused);
                    stats.merged += 1;
                }
                None => {
                    self.insert(candidate);
                    stats.added += 1;
                }
            }
        }
        self.frames_processed += 1;
        stats.nodes = self.nodes.len();
        Ok(stats)
    }

    /// Highest `geo + sem` among nodes passing both gates; lowest id on ties.
    fn best_match(&self, candidate: &SceneNode) -> Result<Option<u32>> {
        let nodes: Vec<&SceneNode> = self.nodes.values().collect();
        let scores: Vec<Result<MatchScore>> = nodes
            .par_iter()
            .map(|n| match_score(candidate, n, &self.config))
            .collect();
        let mut best: Option<(u32, f64)> = None;
        for (node, score) in nodes.iter().zip(scores) {
            let score = score?;
            if !score.merge {
                continue;
            }
            let total = score.geo + score.sem;
            if best.is_none_or(|(_, b)| total > b) {
                best = Some((node.node_id, total));
            }
        }
        Ok(best.map(|(id, _)| id))
    }

    /// Fuses nodes that share space and look alike, repeating until no such
    /// pair remains. Each group is merged in ascending id order into its
    /// lowest id. Returns the number of nodes absorbed.
    pub fn refine(&mut self) -> Result<usize> {
        let mut absorbed = 0;
        loop {
            let ids: Vec<u32> = self.nodes.keys().copied().collect();
            let pairs = self.mergeable_pairs()?;
            if pairs.is_empty() {
                return Ok(absorbed);
            }
            let mut uf = UnionFind::new(ids.len());
            for (i, j) in pairs {
                uf.union(i, j);
            }
            for group in uf.groups().into_iter().filter(|g| g.len() > 1) {
                let mut fused = self.nodes.remove(&ids[group[0]]).expect("node present");
                for &k in &group[1..] {
                    let other = self.nodes.remove(&ids[k]).expect("node present");
                    fused = merge_into(&fused, &other, &self.config)?;
                    absorbed += 1;
                }
                self.nodes.insert(fused.node_id, fused);
            }
        }
    }

    /// Index pairs `(i, j)`, `i < j` into the id-ordered node list, whose
    /// overlap reaches `tau_refine` and whose similarity reaches `tau_sem`.
    pub fn mergeable_pairs(&self) -> Result<Vec<(usize, usize)>> {
        let nodes: Vec<&SceneNode> = self.nodes.values().collect();
        let cfg = &self.config;
        let found: Vec<Result<Vec<(usize, usize)>>> = (0..nodes.len())
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                for j in (i + 1)..nodes.len() {
                    let sem = semantic_similarity(&nodes[i].dino_embedding, &nodes[j].dino_embedding)?;
                    if sem < cfg.tau_sem {
                        continue;
                    }
                    if overlap(nodes[i], nodes[j], cfg.delta_nn, cfg.tau_refine)? >= cfg.tau_refine {
                        out.push((i, j));
                    }
                }
                Ok(out)
            })
            .collect();
        let mut pairs = Vec::new();
        for f in found {
            pairs.extend(f?);
        }
        Ok(pairs)
    }

    /// Drops nodes below the point or detection minimums. Returns how many
    /// were dropped.
    pub fn finalize(&mut self) -> usize {
        let before = self.nodes.len();
        let (min_points, min_detections) = (self.config.min_points, self.config.min_detections);
        self.nodes
            .retain(|_, n| n.point_count() >= min_points && n.num_detections() >= min_detections);
        before - self.nodes.len()
    }
}

/// Per-frame counts plus the refine/finalize totals of one build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuildLog {
    pub frames: Vec<FrameStats>,
    pub refine_absorbed: usize,
    pub finalize_dropped: usize,
    pub nodes: usize,
}

/// Runs the full pipeline: update with every frame in order, refine, then
/// finalize.
pub fn build_map<'a>(
    frames: impl IntoIterator<Item = &'a FrameRecord>,
    config: MergeConfig,
) -> Result<(InstanceMap, BuildLog)> {
    let mut map = InstanceMap::new(config)?;
    let frames = frames
        .into_iter()
        .map(|f| map.update(f))
        .collect::<Result<Vec<_>>>()?;
    let refine_absorbed = map.refine()?;
    let finalize_dropped = map.finalize();
    let log = BuildLog { frames, refine_absorbed, finalize_dropped, nodes: map.len() };
    Ok((map, log))
}
