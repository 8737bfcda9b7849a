//! Run configuration: defaults, a flat `key = value` file, and per-key
//! overrides, applied in that order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::map::MergeConfig;
use crate::nav::NavConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub merge: MergeConfig,
    pub nav: NavConfig,
    /// Overrides the episode file's `threshold_m` when set.
    pub success_threshold: Option<f64>,
    pub seed: u64,
    /// Input and output locations. Kept out of `echo` so that moving files
    /// does not change any artifact.
    pub paths: BTreeMap<String, PathBuf>,
}

/// Keys accepted by [`RunConfig::set`], in echo order.
pub const KEYS: &[&str] = &[
    "delta_nn",
    "tau_geo",
    "tau_sem",
    "tau_refine",
    "voxel_size",
    "dbscan_eps",
    "dbscan_min_pts",
    "min_points",
    "min_detections",
    "background_labels",
    "cell_size",
    "z_min",
    "z_max",
    "floor_z",
    "robot_radius",
    "grid_padding",
    "success_threshold",
    "seed",
];

pub const PATH_KEYS: &[&str] = &["frames", "map", "query", "scenes", "episodes", "out"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parameter {
        name: "config",
        reason: format!("`{key}`: cannot parse `{value}`"),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (m, n) = (&mut self.merge, &mut self.nav);
        match key {
            "delta_nn" => m.delta_nn = parse(key, value)?,
            "tau_geo" => m.tau_geo = parse(key, value)?,
            "tau_sem" => m.tau_sem = parse(key, value)?,
            "tau_refine" => m.tau_refine = parse(key, value)?,
            "voxel_size" => m.voxel_size = parse(key, value)?,
            "dbscan_eps" => m.dbscan_eps = parse(key, value)?,
            "dbscan_min_pts" => m.dbscan_min_pts = parse(key, value)?,
            "min_points" => m.min_points = parse(key, value)?,
            "min_detections" => m.min_detections = parse(key, value)?,
            "background_labels" => {
                m.background_labels = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "cell_size" => n.cell_size = parse(key, value)?,
            "z_min" => n.z_min = parse(key, value)?,
            "z_max" => n.z_max = parse(key, value)?,
            "floor_z" => n.floor_z = parse(key, value)?,
            "robot_radius" => n.robot_radius = parse(key, value)?,
            "grid_padding" => n.grid_padding = parse(key, value)?,
            "success_threshold" => self.success_threshold = Some(parse(key, value)?),
            "seed" => self.seed = parse(key, value)?,
            k if PATH_KEYS.contains(&k) => {
                self.paths.insert(k.to_string(), PathBuf::from(value.trim()));
            }
            _ => {
                return Err(Error::Parameter {
                    name: "config",
                    reason: format!("unknown key `{key}`"),
                })
            }
        }
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parameter {
                name: "config",
                reason: format!("line {}: expected `key = value`", i + 1),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.merge.validate()?;
        let n = &self.nav;
        if !(n.cell_size > 0.0) {
            return Err(Error::param("cell_size", "must be > 0"));
        }
        if !(n.z_min < n.z_max) {
            return Err(Error::param("z_min", "must be below z_max"));
        }
        if !(n.robot_radius >= 0.0) || !(n.grid_padding >= 0.0) {
            return Err(Error::param("robot_radius", "radius and padding must be >= 0"));
        }
        if let Some(t) = self.success_threshold {
            if !(t > 0.0) {
                return Err(Error::param("success_threshold", "must be > 0"));
            }
        }
        Ok(())
    }

    /// Every non-path setting as text, keyed as in a config file.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let (m, n) = (&self.merge, &self.nav);
        let labels: Vec<&str> = m.background_labels.iter().map(String::as_str).collect();
        let values = [
            m.delta_nn.to_string(),
            m.tau_geo.to_string(),
            m.tau_sem.to_string(),
            m.tau_refine.to_string(),
            m.voxel_size.to_string(),
            m.dbscan_eps.to_string(),
            m.dbscan_min_pts.to_string(),
            m.min_points.to_string(),
            m.min_detections.to_string(),
            labels.join(","),
            n.cell_size.to_string(),
            n.z_min.to_string(),
            n.z_max.to_string(),
            n.floor_z.to_string(),
            n.robot_radius.to_string(),
            n.grid_padding.to_string(),
            self.success_threshold.map_or_else(|| "episodes".to_string(), |t| t.to_string()),
            self.seed.to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(values).collect()
    }

    /// The config file text that reproduces this configuration.
    pub fn to_file_text(&self) -> String {
        let echo = self.echo();
        KEYS.iter()
            .filter(|k| !(**k == "success_threshold" && self.success_threshold.is_none()))
            .map(|k| format!("{k} = {}\n", echo[*k]))
            .collect()
    }
}
