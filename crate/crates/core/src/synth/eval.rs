use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{camera_path, generate_episodes, generate_scene, render_frames};
use super::{EpisodeSpec, EpisodeSuite, RenderOptions, SceneParams, SyntheticScene};
use crate::error::Result;
use crate::map::{build_map, InstanceMap, MergeConfig};
use crate::nav::{answer, GoalPoint, NavConfig, Query};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub scene: String,
    pub text: String,
    pub object_id: u32,
    pub instance_rank: usize,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_node: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth_goal: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessReport {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub results: Vec<EpisodeResult>,
}

impl SuccessReport {
    fn from_results(results: Vec<EpisodeResult>) -> Self {
        let successes = results.iter().filter(|r| r.success).count();
        Self {
            episodes: results.len(),
            successes,
            success_rate: rate(successes, results.len()),
            results,
        }
    }
}

fn rate(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

fn run_episode(scene: &SyntheticScene, e: &EpisodeSpec, map: &InstanceMap, nav: &NavConfig) -> EpisodeResult {
    let mut result = EpisodeResult {
        scene: e.scene.clone(),
        text: e.text.clone(),
        object_id: e.object_id,
        instance_rank: e.instance_rank,
        success: false,
        selected_node: None,
        goal: None,
        ground_truth_goal: None,
        distance_m: None,
        reason: None,
    };
    let outcome = Query::new(e.text.clone(), &e.embedding, e.instance_rank)
        .and_then(|q| answer(map, &q, scene.start, nav));
    let a = match outcome {
        Ok(a) => a,
        Err(err) => {
            result.reason = Some(err.to_string());
            return result;
        }
    };
    result.selected_node = Some(a.goal.node_id);
    result.goal = Some(a.goal);
    let Some(target) = scene.objects.iter().find(|o| o.object_id == e.object_id) else {
        result.reason = Some(format!("object {} not in scene", e.object_id));
        return result;
    };
    let truth = match a.grid.closest_reachable([target.center[0], target.center[1]]) {
        Ok((row, col)) => a.grid.center(row, col),
        Err(err) => {
            result.reason = Some(format!("ground truth: {err}"));
            return result;
        }
    };
    let d = (a.goal.x - truth[0]).hypot(a.goal.y - truth[1]);
    result.ground_truth_goal = Some(truth);
    result.distance_m = Some(d);
    result.success = d <= e.threshold_m;
    if !result.success {
        result.reason = Some(format!("goal {d:.3} m from ground truth"));
    }
    result
}

/// Answers every episode against `map` from the scene's start position. An
/// episode succeeds when its goal lies within its threshold of the reachable
/// cell nearest the ground-truth object's center; errors count as failures.
pub fn evaluate_success(
    scene: &SyntheticScene,
    episodes: &[EpisodeSpec],
    map: &InstanceMap,
    nav: &NavConfig,
) -> SuccessReport {
    let results = episodes.par_iter().map(|e| run_episode(scene, e, map, nav)).collect();
    SuccessReport::from_results(results)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RecoveryCounts {
    pub true_positives: usize,
    pub false_positives: usize,
    pub misses: usize,
}

impl std::ops::AddAssign for RecoveryCounts {
    fn add_assign(&mut self, o: Self) {
        self.true_positives += o.true_positives;
        self.false_positives += o.false_positives;
        self.misses += o.misses;
    }
}

/// Greedily pairs nodes with objects of the same class, nearest centroids
/// first, accepting pairs closer than half the object's bounding diagonal.
pub fn evaluate_instance_recovery(scene: &SyntheticScene, map: &InstanceMap) -> RecoveryCounts {
    let nodes: Vec<_> = map.nodes().filter_map(|n| Some((n, n.cloud.centroid()?))).collect();
    let mut pairs = Vec::new();
    for (ni, (node, c)) in nodes.iter().enumerate() {
        for (oi, o) in scene.objects.iter().enumerate() {
            if node.dominant_label() != o.class_name {
                continue;
            }
            let d = ((c.x - o.center[0]).powi(2) + (c.y - o.center[1]).powi(2) + (c.z - o.center[2]).powi(2)).sqrt();
            if d <= 0.5 * o.diagonal() {
                pairs.push((d, ni, oi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut node_used = vec![false; nodes.len()];
    let mut object_used = vec![false; scene.objects.len()];
    let mut tp = 0;
    for (_, ni, oi) in pairs {
        if !node_used[ni] && !object_used[oi] {
            node_used[ni] = true;
            object_used[oi] = true;
            tp += 1;
        }
    }
    RecoveryCounts {
        true_positives: tp,
        false_positives: map.len() - tp,
        misses: scene.objects.len() - tp,
    }
}

/// Scenes of a benchmark and how they are rendered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSuite {
    pub scenes: Vec<SceneParams>,
    pub render: RenderOptions,
}

impl Default for SceneSuite {
    fn default() -> Self {
        Self { scenes: vec![SceneParams::default()], render: RenderOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneReport {
    pub name: String,
    pub seed: u64,
    pub objects: usize,
    pub frames: usize,
    pub nodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryCounts>,
    pub success: SuccessReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryCounts>,
    pub scenes: Vec<SceneReport>,
}

/// Map built from a scene's rendered camera ring.
pub fn map_scene(scene: &SyntheticScene, render: &RenderOptions, merge: &MergeConfig) -> Result<(InstanceMap, usize)> {
    let path = camera_path(scene);
    let frames = render_frames(scene, &path, &scene.camera.intrinsics(), render);
    let (map, _) = build_map(&frames, merge.clone())?;
    Ok((map, frames.len()))
}

/// Generates, renders, maps, and evaluates every scene. Scene `i` uses
/// seed `seed + scenes[i].seed_offset`.
pub fn run_benchmark(
    scenes: &SceneSuite,
    episodes: &EpisodeSuite,
    merge: &MergeConfig,
    nav: &NavConfig,
    seed: u64,
    recovery: bool,
) -> Result<BenchmarkReport> {
    let mut reports = Vec::with_capacity(scenes.scenes.len());
    for params in &scenes.scenes {
        let scene_seed = seed.wrapping_add(params.seed_offset);
        let scene = generate_scene(params, scene_seed)?;
        let (map, frames) = map_scene(&scene, &scenes.render, merge)?;
        let specs = generate_episodes(&scene, episodes, scene_seed)?;
        reports.push(SceneReport {
            name: scene.name.clone(),
            seed: scene_seed,
            objects: scene.objects.len(),
            frames,
            nodes: map.len(),
            recovery: recovery.then(|| evaluate_instance_recovery(&scene, &map)),
            success: evaluate_success(&scene, &specs, &map, nav),
        });
    }
    let total = reports.iter().map(|r| r.success.episodes).sum();
    let successes = reports.iter().map(|r| r.success.successes).sum();
    let recovery = recovery.then(|| {
        let mut sum = RecoveryCounts::default();
        for r in &reports {
            sum += r.recovery.unwrap_or_default();
        }
        sum
    });
    Ok(BenchmarkReport {
        seed,
        episodes: total,
        successes,
        success_rate: rate(successes, total),
        recovery,
        scenes: reports,
    })
}

impl BenchmarkReport {
    pub fn summary_table(&self) -> String {
        let mut s = String::new();
        let recovery = self.recovery.is_some();
        let _ = write!(s, "{:<16} {:>6} {:>7} {:>6} {:>9} {:>8}", "scene", "seed", "objects", "nodes", "episodes", "success");
        if recovery {
            let _ = write!(s, " {:>4} {:>4} {:>6}", "tp", "fp", "misses");
        }
        s.push('\n');
        for r in &self.scenes {
            let _ = write!(
                s,
                "{:<16} {:>6} {:>7} {:>6} {:>9} {:>8.3}",
                r.name, r.seed, r.objects, r.nodes, r.success.episodes, r.success.success_rate
            );
            if let Some(c) = r.recovery {
                let _ = write!(s, " {:>4} {:>4} {:>6}", c.true_positives, c.false_positives, c.misses);
            }
            s.push('\n');
        }
        let _ = write!(s, "{:<16} {:>6} {:>7} {:>6} {:>9} {:>8.3}", "total", self.seed, "", "", self.episodes, self.success_rate);
        if let Some(c) = self.recovery {
            let _ = write!(s, " {:>4} {:>4} {:>6}", c.true_positives, c.false_positives, c.misses);
        }
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{aabb_of, Point, PointCloud};
    use crate::map::{SceneNode, SourceRef};
    use crate::synth::SceneParams;
    use std::collections::BTreeMap;

    fn node_at(id: u32, label: &str, c: [f64; 3], clip: Vec<f64>) -> SceneNode {
        let cloud: PointCloud = (0..27)
            .map(|i| Point::new(c[0] + 0.02 * (i % 3) as f64 - 0.02, c[1] + 0.02 * ((i / 3) % 3) as f64 - 0.02, c[2] + 0.02 * (i / 9) as f64 - 0.02))
            .collect();
        SceneNode {
            node_id: id,
            bbox: aabb_of(&cloud).unwrap(),
            cloud,
            clip_embedding: clip,
            dino_embedding: vec![1.0],
            source_frames: vec![SourceRef { frame_id: 0, detection: id }],
            label_histogram: BTreeMap::from([(label.to_string(), 1)]),
        }
    }

    fn perfect_map(scene: &SyntheticScene) -> Vec<SceneNode> {
        scene
            .objects
            .iter()
            .map(|o| node_at(o.object_id, &o.class_name, o.center, o.clip_embedding.clone()))
            .collect()
    }

    fn map_of(nodes: Vec<SceneNode>) -> InstanceMap {
        let next = nodes.iter().map(|n| n.node_id + 1).max().unwrap_or(0);
        InstanceMap::from_parts(MergeConfig::default(), nodes, next, 1).unwrap()
    }

    fn scene() -> SyntheticScene {
        generate_scene(&SceneParams { num_objects: 6, ..SceneParams::default() }, 21).unwrap()
    }

    #[test]
    fn recovery_shapes() {
        let s = scene();
        let perfect = map_of(perfect_map(&s));
        assert_eq!(
            evaluate_instance_recovery(&s, &perfect),
            RecoveryCounts { true_positives: 6, false_positives: 0, misses: 0 }
        );

        let mut nodes = perfect_map(&s);
        nodes.remove(2);
        nodes.push(node_at(99, &s.objects[0].class_name, [0.0, 0.0, 0.5], vec![1.0; 64]));
        assert_eq!(
            evaluate_instance_recovery(&s, &map_of(nodes)),
            RecoveryCounts { true_positives: 5, false_positives: 1, misses: 1 }
        );

        let empty = InstanceMap::new(MergeConfig::default()).unwrap();
        assert_eq!(
            evaluate_instance_recovery(&s, &empty),
            RecoveryCounts { true_positives: 0, false_positives: 0, misses: 6 }
        );
    }

    #[test]
    fn exact_queries_succeed_and_bad_rank_fails() {
        let s = scene();
        let map = map_of(perfect_map(&s));
        let mut episodes: Vec<EpisodeSpec> = s
            .objects
            .iter()
            .map(|o| EpisodeSpec {
                scene: s.name.clone(),
                text: o.class_name.clone(),
                embedding: o.clip_embedding.clone(),
                instance_rank: 1,
                object_id: o.object_id,
                threshold_m: 1.0,
            })
            .collect();
        let mut bad = episodes[0].clone();
        bad.instance_rank = 7;
        episodes.push(bad);
        let report = evaluate_success(&s, &episodes, &map, &NavConfig::default());
        assert_eq!(report.episodes, 7);
        assert_eq!(report.successes, 6);
        let failed = &report.results[6];
        assert!(!failed.success);
        assert!(failed.reason.as_deref().unwrap().contains("only 6 instances"));

        episodes.reverse();
        let reversed = evaluate_success(&s, &episodes, &map, &NavConfig::default());
        assert_eq!(reversed.success_rate, report.success_rate);
    }
}
