use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{perturb, rng, stream, SyntheticScene};
use crate::embedding::dot;
use crate::error::{Error, Result};

/// How query episodes are drawn for each scene of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeSuite {
    /// Success distance between the returned goal and the ground-truth goal.
    pub threshold_m: f64,
    /// Expected norm of the noise added to the source object's embedding.
    pub query_noise: f64,
    pub episodes_per_scene: usize,
    /// Every n-th generated episode asks for the second-ranked instance;
    /// 0 disables.
    pub rank2_every: usize,
    /// Ground-truth ranking gap required around the requested rank.
    pub rank_margin: f64,
    pub explicit: Vec<ExplicitEpisode>,
}

impl Default for EpisodeSuite {
    fn default() -> Self {
        Self {
            threshold_m: 1.0,
            query_noise: 0.1,
            episodes_per_scene: 10,
            rank2_every: 5,
            rank_margin: 0.05,
            explicit: Vec::new(),
        }
    }
}

/// A hand-written episode: the query is `object_id`'s embedding exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitEpisode {
    pub scene: String,
    pub object_id: u32,
    #[serde(default = "one")]
    pub instance_rank: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeSpec {
    pub scene: String,
    pub text: String,
    pub embedding: Vec<f64>,
    pub instance_rank: usize,
    /// Ground-truth target.
    pub object_id: u32,
    pub threshold_m: f64,
}

impl EpisodeSuite {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_m > 0.0 && self.threshold_m.is_finite()) {
            return Err(Error::param("threshold_m", format!("must be > 0, got {}", self.threshold_m)));
        }
        if !(self.query_noise >= 0.0) || !(self.rank_margin >= 0.0) {
            return Err(Error::param("query_noise", "noise and margin must be >= 0"));
        }
        if self.explicit.iter().any(|e| e.instance_rank == 0) {
            return Err(Error::param("instance_rank", "must be >= 1"));
        }
        Ok(())
    }
}

/// Objects ordered by similarity to `query`, best first, lower id on ties.
fn ground_truth_ranking(scene: &SyntheticScene, query: &[f64]) -> Vec<(u32, f64)> {
    let mut r: Vec<(u32, f64)> = scene
        .objects
        .iter()
        .map(|o| (o.object_id, dot(query, &o.clip_embedding)))
        .collect();
    r.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    r
}

fn separated(ranking: &[(u32, f64)], rank: usize, margin: f64) -> bool {
    let i = rank - 1;
    let above = i == 0 || ranking[i - 1].1 - ranking[i].1 >= margin;
    let below = i + 1 >= ranking.len() || ranking[i].1 - ranking[i + 1].1 >= margin;
    above && below
}

const ATTEMPTS: usize = 64;

/// Draws `episodes_per_scene` queries for `scene`, then appends the suite's
/// explicit episodes naming it. A generated query is the source object's
/// embedding plus noise; its target is the object at the requested rank in
/// the ground-truth ranking, accepted only when that rank is separated from
/// its neighbors by `rank_margin`. A rank-2 draw that never separates falls
/// back to rank 1.
pub fn generate_episodes(scene: &SyntheticScene, suite: &EpisodeSuite, seed: u64) -> Result<Vec<EpisodeSpec>> {
    suite.validate()?;
    let mut out = Vec::new();
    let mut r = rng(seed, stream::EPISODES);
    let class_of = |id: u32| scene.objects[id as usize].class_name.clone();
    if !scene.objects.is_empty() {
        for j in 0..suite.episodes_per_scene {
            let wanted = if suite.rank2_every > 0 && (j + 1) % suite.rank2_every == 0 { 2 } else { 1 };
            let mut chosen = None;
            'ranks: for rank in (1..=wanted).rev() {
                if rank > scene.objects.len() {
                    continue;
                }
                for _ in 0..ATTEMPTS {
                    let source = &scene.objects[r.random_range(0..scene.objects.len())];
                    let query = perturb(&source.clip_embedding, suite.query_noise, &mut r);
                    let ranking = ground_truth_ranking(scene, &query);
                    if separated(&ranking, rank, suite.rank_margin) {
                        chosen = Some((query, rank, ranking[rank - 1].0));
                        break 'ranks;
                    }
                }
            }
            let (embedding, instance_rank, object_id) = chosen.ok_or_else(|| {
                Error::State(format!(
                    "scene `{}`: no query met rank_margin {} after {ATTEMPTS} attempts",
                    scene.name, suite.rank_margin
                ))
            })?;
            out.push(EpisodeSpec {
                scene: scene.name.clone(),
                text: class_of(object_id),
                embedding,
                instance_rank,
                object_id,
                threshold_m: suite.threshold_m,
            });
        }
    }
    for e in suite.explicit.iter().filter(|e| e.scene == scene.name) {
        let source = scene
            .objects
            .get(e.object_id as usize)
            .ok_or_else(|| Error::param("object_id", format!("scene `{}` has no object {}", scene.name, e.object_id)))?;
        let ranking = ground_truth_ranking(scene, &source.clip_embedding);
        let object_id = ranking.get(e.instance_rank - 1).map_or(e.object_id, |m| m.0);
        out.push(EpisodeSpec {
            scene: scene.name.clone(),
            text: class_of(object_id),
            embedding: source.clip_embedding.clone(),
            instance_rank: e.instance_rank,
            object_id,
            threshold_m: suite.threshold_m,
        });
    }
    Ok(out)
}
