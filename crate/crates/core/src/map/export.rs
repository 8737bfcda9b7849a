use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InstanceMap, MergeConfig, SceneNode, SourceRef};
use crate::error::{Error, Result};
use crate::geometry::{aabb_of, Aabb, Point, PointCloud};
use crate::ply::{read_ply, write_ply};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SCENE_PLY: &str = "scene.ply";
const FORMAT: &str = "o3dsim-map";
const MANIFEST_VERSION: u32 = 1;

/// Metadata embedded in every exported artifact.
#[derive(Debug, Clone, Default)]
pub struct ExportOptions {
    /// Hex SHA-256 of the input the map was built from.
    pub input_sha256: Option<String>,
    /// Effective run configuration, echoed verbatim.
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestNode {
    pub id: u32,
    pub label: String,
    pub ply: String,
    pub color: [u8; 3],
    pub bbox: ManifestBox,
    pub point_count: usize,
    pub num_detections: usize,
    pub label_histogram: BTreeMap<String, u32>,
    pub source_frames: Vec<SourceRef>,
    pub clip_embedding: Vec<f64>,
    pub dino_embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub schema_version: u32,
    pub input_sha256: Option<String>,
    pub config: BTreeMap<String, String>,
    pub merge_config: MergeConfig,
    pub frames_processed: u64,
    pub next_id: u32,
    pub scene_ply: String,
    pub nodes: Vec<ManifestNode>,
}

/// Deterministic, well-spread color for a node id (golden-ratio hue walk).
pub fn node_color(node_id: u32) -> [u8; 3] {
    let h = (node_id as f64 * 0.618_033_988_749_895 + 0.1).fract() * 6.0;
    let (s, v) = (0.65, 0.95);
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |f: f64| ((f + m) * 255.0).round() as u8;
    [q(r), q(g), q(b)]
}

fn node_file(id: u32) -> String {
    format!("node_{id:05}.ply")
}

/// Writes one PLY per node, a combined scene PLY, and `manifest.json`.
pub fn export_map(map: &InstanceMap, dir: &Path, options: &ExportOptions) -> Result<Manifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut comments = vec!["generated by o3dsim".to_string()];
    if let Some(hash) = &options.input_sha256 {
        comments.push(format!("input_sha256 {hash}"));
    }

    let mut scene = Vec::new();
    let mut nodes = Vec::with_capacity(map.len());
    for node in map.nodes() {
        let color = node_color(node.node_id);
        let colored: Vec<(Point, [u8; 3])> = node.cloud.points.iter().map(|p| (*p, color)).collect();
        let file = node_file(node.node_id);
        let mut node_comments = comments.clone();
        node_comments.push(format!("node_id {}", node.node_id));
        write_ply(&dir.join(&file), &colored, &node_comments)?;
        scene.extend(colored);
        // Describe the coordinates as stored in the PLY, so a reload reproduces them.
        let stored: PointCloud = node.cloud.points.iter().map(|p| p.map(|c| c as f32 as f64)).collect();
        let bbox = aabb_of(&stored)?;
        nodes.push(ManifestNode {
            id: node.node_id,
            label: node.dominant_label().to_string(),
            ply: file,
            color,
            bbox: ManifestBox {
                min: bbox.min.into(),
                max: bbox.max.into(),
            },
            point_count: node.point_count(),
            num_detections: node.num_detections(),
            label_histogram: node.label_histogram.clone(),
            source_frames: node.source_frames.clone(),
            clip_embedding: node.clip_embedding.clone(),
            dino_embedding: node.dino_embedding.clone(),
        });
    }
    write_ply(&dir.join(SCENE_PLY), &scene, &comments)?;

    let manifest = Manifest {
        format: FORMAT.to_string(),
        schema_version: MANIFEST_VERSION,
        input_sha256: options.input_sha256.clone(),
        config: options.config.clone(),
        merge_config: map.config().clone(),
        frames_processed: map.frames_processed(),
        next_id: map.next_id(),
        scene_ply: SCENE_PLY.to_string(),
        nodes,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(&path, e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads a map directory written by [`export_map`].
pub fn load_map(dir: &Path) -> Result<(InstanceMap, Manifest)> {
    let path = dir.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(Error::MapNotFound(dir.to_path_buf()));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.format != FORMAT || manifest.schema_version != MANIFEST_VERSION {
        return Err(Error::format(&path, "not an o3dsim map manifest"));
    }

    let mut nodes = Vec::with_capacity(manifest.nodes.len());
    for entry in &manifest.nodes {
        let ply_path = dir.join(&entry.ply);
        let cloud: PointCloud = read_ply(&ply_path)?.into_iter().map(|(p, _)| p).collect();
        if cloud.len() != entry.point_count {
            return Err(Error::format(
                &ply_path,
                format!("{} points, manifest says {}", cloud.len(), entry.point_count),
            ));
        }
        if entry.source_frames.len() != entry.num_detections {
            return Err(Error::format(&path, format!("node {}: detection count mismatch", entry.id)));
        }
        let bbox: Aabb = aabb_of(&cloud).map_err(|_| Error::format(&ply_path, "empty node cloud"))?;
        nodes.push(SceneNode {
            node_id: entry.id,
            cloud,
            clip_embedding: entry.clip_embedding.clone(),
            dino_embedding: entry.dino_embedding.clone(),
            bbox,
            source_frames: entry.source_frames.clone(),
            label_histogram: entry.label_histogram.clone(),
        });
    }
    let map = InstanceMap::from_parts(
        manifest.merge_config.clone(),
        nodes,
        manifest.next_id,
        manifest.frames_processed,
    )?;
    Ok((map, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map(n: u32) -> InstanceMap {
        let nodes = (0..n)
            .map(|i| {
                let cloud: PointCloud = (0..5)
                    .map(|k| Point::new(i as f64 + 0.1 * k as f64, 0.3, 1.234_567))
                    .collect();
                SceneNode {
                    node_id: i * 2,
                    bbox: aabb_of(&cloud).unwrap(),
                    cloud,
                    clip_embedding: vec![0.6, 0.8],
                    dino_embedding: vec![1.0, 0.0, 0.0],
                    source_frames: vec![SourceRef { frame_id: i as u64, detection: 1 }],
                    label_histogram: BTreeMap::from([("chair".to_string(), 1)]),
                }
            })
            .collect();
        InstanceMap::from_parts(MergeConfig::default(), nodes, 2 * n + 1, 4).unwrap()
    }

    #[test]
    fn writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_map(&sample_map(3), dir.path(), &ExportOptions::default()).unwrap();
        assert_eq!(m.nodes.len(), 3);
        let mut files: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        files.sort();
        assert_eq!(files, ["manifest.json", "node_00000.ply", "node_00002.ply", "node_00004.ply", "scene.ply"]);
        assert_eq!(read_ply(&dir.path().join(SCENE_PLY)).unwrap().len(), 15);
    }

    #[test]
    fn empty_map_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_map(&InstanceMap::new(MergeConfig::default()).unwrap(), dir.path(), &ExportOptions::default())
            .unwrap();
        assert!(m.nodes.is_empty());
        let (loaded, _) = load_map(dir.path()).unwrap();
        assert!(loaded.is_empty());
    }

    #[test]
    fn round_trip_within_float_precision() {
        let dir = tempfile::tempdir().unwrap();
        let map = sample_map(4);
        export_map(&map, dir.path(), &ExportOptions::default()).unwrap();
        let (loaded, _) = load_map(dir.path()).unwrap();
        assert_eq!(loaded.len(), map.len());
        assert_eq!(loaded.next_id(), map.next_id());
        for (a, b) in map.nodes().zip(loaded.nodes()) {
            assert_eq!(a.node_id, b.node_id);
            assert_eq!(a.source_frames, b.source_frames);
            assert_eq!(a.label_histogram, b.label_histogram);
            assert_eq!(a.clip_embedding, b.clip_embedding);
            for (p, q) in a.cloud.points.iter().zip(&b.cloud.points) {
                assert!((p - q).amax() <= 1e-6);
            }
            assert!((a.bbox.min - b.bbox.min).amax() <= 1e-6);
        }
    }

    #[test]
    fn re_export_is_byte_identical() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let mut map = sample_map(3);
        let opts = ExportOptions { input_sha256: Some("ab".into()), config: BTreeMap::new() };
        for n in map.nodes.values_mut() {
            n.clip_embedding = vec![-0.105_683_836_221_442_19, 0.994_399_872_330_154_3];
        }
        export_map(&map, a.path(), &opts).unwrap();
        let (loaded, _) = load_map(a.path()).unwrap();
        export_map(&loaded, b.path(), &opts).unwrap();
        for f in [MANIFEST_FILE, SCENE_PLY, "node_00002.ply"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn missing_directory() {
        let err = load_map(Path::new("/nonexistent/o3dsim")).unwrap_err();
        assert!(err.to_string().starts_with("map not found"));
    }

    #[test]
    fn colors_are_stable_and_distinct() {
        assert_eq!(node_color(7), node_color(7));
        let colors: std::collections::HashSet<_> = (0..20).map(node_color).collect();
        assert_eq!(colors.len(), 20);
    }
}
