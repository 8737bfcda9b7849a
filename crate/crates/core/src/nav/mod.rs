//! Instance lookup by query embedding and goal synthesis on an inflated
//! occupancy grid.
//!
//! A [`Query`] carries a precomputed text embedding. Anything that turns a
//! natural-language instruction into `{text, embedding, instance_rank}` can
//! drive [`answer`]; the engine itself does no text encoding.

mod grid;
mod pgm;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, normalized};
use crate::error::{Error, Result};
use crate::map::InstanceMap;

pub use grid::{build_grid, goal_for, CellState, GoalPoint, OccupancyGrid};
pub use pgm::{write_grid, GridHeader, GRID_HEADER_SUFFIX};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query {
    pub text: String,
    /// Unit norm; normalized on construction.
    pub embedding: Vec<f64>,
    /// 1-based position in the ranked list.
    pub instance_rank: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    #[serde(default)]
    text: String,
    embedding: Vec<f64>,
    #[serde(default = "default_rank")]
    instance_rank: usize,
}

fn default_rank() -> usize {
    1
}

impl Query {
    pub fn new(text: impl Into<String>, embedding: &[f64], instance_rank: usize) -> Result<Self> {
        if instance_rank == 0 {
            return Err(Error::param("instance_rank", "must be >= 1"));
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("embedding", "contains non-finite values"));
        }
        let embedding = normalized(embedding)
            .ok_or_else(|| Error::param("embedding", "zero vector"))?;
        Ok(Self { text: text.into(), embedding, instance_rank })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: RawQuery = serde_json::from_slice(bytes)
            .map_err(|e| Error::param("query", e.to_string()))?;
        Self::new(raw.text, &raw.embedding, raw.instance_rank)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankedMatch {
    pub node_id: u32,
    pub score: f64,
    pub rank: usize,
}

/// Every node ranked by cosine similarity of its CLIP embedding to the
/// query, best first, lower node id first on equal scores.
pub fn rank_instances(map: &InstanceMap, query: &Query) -> Result<Vec<RankedMatch>> {
    if map.is_empty() {
        return Err(Error::NoInstances);
    }
    let mut scored = map
        .nodes()
        .map(|n| {
            if n.clip_embedding.len() != query.embedding.len() {
                return Err(Error::param(
                    "embedding",
                    format!(
                        "query has dimension {}, node {} has {}",
                        query.embedding.len(),
                        n.node_id,
                        n.clip_embedding.len()
                    ),
                ));
            }
            Ok((n.node_id, cosine(&query.embedding, &n.clip_embedding)?))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (node_id, score))| RankedMatch { node_id, score, rank: i + 1 })
        .collect())
}

pub fn select_instance(matches: &[RankedMatch], instance_rank: usize) -> Result<u32> {
    if instance_rank == 0 || instance_rank > matches.len() {
        return Err(Error::RankOutOfRange { requested: instance_rank, available: matches.len() });
    }
    Ok(matches[instance_rank - 1].node_id)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NavConfig {
    pub cell_size: f64,
    /// Occupancy band, relative to `floor_z`.
    pub z_min: f64,
    pub z_max: f64,
    pub floor_z: f64,
    pub robot_radius: f64,
    /// Free margin around the map extents, meters.
    pub grid_padding: f64,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            z_min: 0.1,
            z_max: 1.5,
            floor_z: 0.0,
            robot_radius: 0.25,
            grid_padding: 1.0,
        }
    }
}

impl NavConfig {
    pub fn z_band(&self) -> (f64, f64) {
        (self.floor_z + self.z_min, self.floor_z + self.z_max)
    }

    /// Occupancy grid, inflated and flooded from `start`.
    pub fn navigable_grid(&self, map: &InstanceMap, start: [f64; 2]) -> Result<OccupancyGrid> {
        build_grid(map, self.cell_size, self.z_band(), self.grid_padding)?
            .inflate(self.robot_radius)?
            .mark_reachable(start)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Answer {
    pub query: String,
    pub instance_rank: usize,
    pub goal: GoalPoint,
    pub ranked: Vec<RankedMatch>,
    #[serde(skip)]
    pub grid: OccupancyGrid,
}

pub fn answer(map: &InstanceMap, query: &Query, start: [f64; 2], nav: &NavConfig) -> Result<Answer> {
    let ranked = rank_instances(map, query)?;
    let node_id = select_instance(&ranked, query.instance_rank)?;
    let grid = nav.navigable_grid(map, start)?;
    let goal = goal_for(map, &grid, node_id)?;
    Ok(Answer {
        query: query.text.clone(),
        instance_rank: query.instance_rank,
        goal,
        ranked,
        grid,
    })
}
