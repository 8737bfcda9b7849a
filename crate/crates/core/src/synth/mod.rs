//! Synthetic ground truth: seeded scenes of boxes and spheres in a walled
//! room, a z-buffer renderer producing frame records, scripted query
//! episodes, and the success-rate and instance-recovery evaluations.

mod episodes;
mod eval;
mod render;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, normalized};
use crate::error::{Error, Result};

pub use episodes::{generate_episodes, EpisodeSpec, EpisodeSuite, ExplicitEpisode};
pub use eval::{
    evaluate_instance_recovery, evaluate_success, run_benchmark, BenchmarkReport, EpisodeResult,
    map_scene, RecoveryCounts, SceneReport, SceneSuite, SuccessReport,
};
pub use render::{camera_path, look_pose, render_frames, CameraRig, RenderOptions};

/// Labels given to the room's own surfaces.
pub const FLOOR_LABEL: &str = "floor";
pub const WALL_LABEL: &str = "wall";

/// Random-stream tags, so each consumer of a scene seed draws independently.
pub(crate) mod stream {
    pub const LAYOUT: u64 = 1;
    pub const PROTOTYPES: u64 = 2;
    pub const OBSERVATION: u64 = 3;
    pub const EPISODES: u64 = 4;
}

pub(crate) fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub(crate) fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// `base` plus isotropic noise of expected norm `scale`, renormalized.
pub(crate) fn perturb(base: &[f64], scale: f64, rng: &mut impl Rng) -> Vec<f64> {
    let per_dim = scale / (base.len() as f64).sqrt();
    let v: Vec<f64> = base
        .iter()
        .zip(gaussian(rng, base.len()))
        .map(|(b, g)| b + per_dim * g)
        .collect();
    normalized(&v).unwrap_or_else(|| base.to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneParams {
    pub name: String,
    pub num_objects: usize,
    /// Room extent along x and y, meters; the room is centered on the origin.
    pub room_size: [f64; 2],
    pub wall_height: f64,
    /// Added to the run seed to get this scene's seed.
    pub seed_offset: u64,
    pub classes: Vec<String>,
    pub clip_dim: usize,
    pub dino_dim: usize,
    /// Largest allowed cosine between two class prototypes.
    pub inter_class_margin: f64,
    /// Smallest allowed cosine between an instance and its class prototype.
    pub intra_class_floor: f64,
    /// Norm of the orthogonal offset that makes each instance distinct.
    pub instance_spread: f64,
    /// Expected norm of per-detection embedding noise.
    pub observation_noise: f64,
    pub box_size_min: [f64; 3],
    pub box_size_max: [f64; 3],
    pub sphere_fraction: f64,
    pub sphere_radius: [f64; 2],
    /// Clearance between object footprints, meters.
    pub min_gap: f64,
    pub wall_margin: f64,
    /// Radius around the start position kept free of objects.
    pub start_clearance: f64,
    pub max_retries: usize,
    pub camera: CameraRig,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            name: "scene".into(),
            num_objects: 6,
            room_size: [8.0, 8.0],
            wall_height: 2.5,
            seed_offset: 0,
            classes: ["chair", "table", "sofa", "cabinet", "plant", "bed", "television", "bin"]
                .map(String::from)
                .to_vec(),
            clip_dim: 64,
            dino_dim: 64,
            inter_class_margin: 0.3,
            intra_class_floor: 0.9,
            instance_spread: 0.4,
            observation_noise: 0.1,
            box_size_min: [0.2, 0.2, 0.3],
            box_size_max: [0.45, 0.45, 0.9],
            sphere_fraction: 0.25,
            sphere_radius: [0.12, 0.22],
            min_gap: 0.3,
            wall_margin: 0.2,
            start_clearance: 1.4,
            max_retries: 2000,
            camera: CameraRig::default(),
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("room_size", self.room_size[0].min(self.room_size[1])),
            ("wall_height", self.wall_height),
            ("sphere_radius", self.sphere_radius[0]),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        if self.sphere_radius[0] > self.sphere_radius[1] {
            return Err(Error::param("sphere_radius", "min exceeds max"));
        }
        for i in 0..3 {
            if !(self.box_size_min[i] > 0.0 && self.box_size_min[i] <= self.box_size_max[i]) {
                return Err(Error::param("box_size_min", "each size must be > 0 and <= box_size_max"));
            }
        }
        if !(0.0..=1.0).contains(&self.sphere_fraction) {
            return Err(Error::param("sphere_fraction", "must lie in [0, 1]"));
        }
        if !(self.min_gap >= 0.0 && self.wall_margin >= 0.0 && self.start_clearance >= 0.0) {
            return Err(Error::param("min_gap", "gaps and clearances must be >= 0"));
        }
        if self.num_objects > 0 && self.classes.is_empty() {
            return Err(Error::param("classes", "at least one class is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if c == FLOOR_LABEL || c == WALL_LABEL || !seen.insert(c) {
                return Err(Error::param("classes", format!("class `{c}` is reserved or repeated")));
            }
        }
        let needed = self.classes.len() + 2;
        if self.clip_dim < needed || self.dino_dim < needed {
            return Err(Error::param(
                "clip_dim",
                format!("embedding dimensions must be >= classes + 2 = {needed}"),
            ));
        }
        if !(0.0..1.0).contains(&self.inter_class_margin) {
            return Err(Error::param("inter_class_margin", "must lie in [0, 1)"));
        }
        let instance_cos = 1.0 / (1.0 + self.instance_spread * self.instance_spread).sqrt();
        if self.instance_spread < 0.0 || instance_cos < self.intra_class_floor {
            return Err(Error::param(
                "instance_spread",
                format!(
                    "gives instance cosine {instance_cos:.4}, below intra_class_floor {}",
                    self.intra_class_floor
                ),
            ));
        }
        if self.observation_noise < 0.0 {
            return Err(Error::param("observation_noise", "must be >= 0"));
        }
        self.camera.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Full side lengths; rotated by `yaw` about the vertical axis.
    Box { size: [f64; 3], yaw: f64 },
    Sphere { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub class_name: String,
    pub shape: Shape,
    pub center: [f64; 3],
    pub clip_embedding: Vec<f64>,
    pub dino_embedding: Vec<f64>,
}

impl SceneObject {
    /// Axis-aligned size in world coordinates.
    pub fn extent(&self) -> [f64; 3] {
        match self.shape {
            Shape::Box { size, yaw } => {
                let (s, c) = (yaw.sin().abs(), yaw.cos().abs());
                [size[0] * c + size[1] * s, size[0] * s + size[1] * c, size[2]]
            }
            Shape::Sphere { radius } => [2.0 * radius; 3],
        }
    }

    /// Length of the axis-aligned bounding box diagonal.
    pub fn diagonal(&self) -> f64 {
        let e = self.extent();
        (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()
    }

    /// Radius of a vertical cylinder around `center` containing the object.
    pub fn footprint_radius(&self) -> f64 {
        match self.shape {
            Shape::Box { size, .. } => 0.5 * (size[0] * size[0] + size[1] * size[1]).sqrt(),
            Shape::Sphere { radius } => radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub clip: Vec<f64>,
    pub dino: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub name: String,
    pub seed: u64,
    pub room_size: [f64; 2],
    pub wall_height: f64,
    pub floor_z: f64,
    /// Robot start and camera rig center.
    pub start: [f64; 2],
    pub observation_noise: f64,
    pub camera: CameraRig,
    /// Per class, plus the floor and wall labels.
    pub prototypes: BTreeMap<String, Prototype>,
    pub objects: Vec<SceneObject>,
}

/// Mutually orthogonal unit vectors.
fn orthonormal(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let d = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        if let Some(u) = normalized(&v).filter(|_| v.iter().map(|x| x * x).sum::<f64>() > 1e-6) {
            basis.push(u);
        }
    }
    basis
}

/// Unit prototype tilted by `spread` along a random direction orthogonal to it.
fn instance_of(proto: &[f64], spread: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut u = orthonormal(rng, 1, proto.len()).remove(0);
    let d = dot(&u, proto);
    u.iter_mut().zip(proto).for_each(|(x, p)| *x -= d * p);
    let u = normalized(&u).expect("random direction independent of prototype");
    let v: Vec<f64> = proto.iter().zip(&u).map(|(p, q)| p + spread * q).collect();
    normalized(&v).expect("nonzero")
}

pub fn generate_scene(params: &SceneParams, seed: u64) -> Result<SyntheticScene> {
    params.validate()?;

    let mut proto_rng = rng(seed, stream::PROTOTYPES);
    let mut labels = params.classes.clone();
    labels.extend([FLOOR_LABEL.to_string(), WALL_LABEL.to_string()]);
    let clip = orthonormal(&mut proto_rng, labels.len(), params.clip_dim);
    let dino = orthonormal(&mut proto_rng, labels.len(), params.dino_dim);
    let prototypes: BTreeMap<String, Prototype> = labels
        .iter()
        .zip(clip.into_iter().zip(dino))
        .map(|(l, (clip, dino))| (l.clone(), Prototype { clip, dino }))
        .collect();
    for (i, a) in prototypes.values().enumerate() {
        for b in prototypes.values().skip(i + 1) {
            if dot(&a.clip, &b.clip) > params.inter_class_margin
                || dot(&a.dino, &b.dino) > params.inter_class_margin
            {
                return Err(Error::State("class prototypes violate the inter-class margin".into()));
            }
        }
    }

    let mut layout = rng(seed, stream::LAYOUT);
    let start = [0.0, 0.0];
    let [half_x, half_y] = [params.room_size[0] / 2.0, params.room_size[1] / 2.0];
    let mut objects: Vec<SceneObject> = Vec::with_capacity(params.num_objects);
    for object_id in 0..params.num_objects as u32 {
        let class_name = params.classes[layout.random_range(0..params.classes.len())].clone();
        let mut placed = None;
        for _ in 0..params.max_retries {
            let (shape, center_z) = if layout.random_bool(params.sphere_fraction) {
                let r = layout.random_range(params.sphere_radius[0]..=params.sphere_radius[1]);
                (Shape::Sphere { radius: r }, r)
            } else {
                let size: [f64; 3] = std::array::from_fn(|i| {
                    layout.random_range(params.box_size_min[i]..=params.box_size_max[i])
                });
                (Shape::Box { size, yaw: layout.random_range(0.0..PI) }, size[2] / 2.0)
            };
            let probe = SceneObject {
                object_id,
                class_name: class_name.clone(),
                shape,
                center: [0.0, 0.0, center_z],
                clip_embedding: Vec::new(),
                dino_embedding: Vec::new(),
            };
            let r = probe.footprint_radius();
            let (lim_x, lim_y) = (half_x - params.wall_margin - r, half_y - params.wall_margin - r);
            if lim_x <= 0.0 || lim_y <= 0.0 {
                continue;
            }
            let x = layout.random_range(-lim_x..=lim_x);
            let y = layout.random_range(-lim_y..=lim_y);
            let clear_of = |cx: f64, cy: f64, need: f64| (x - cx).hypot(y - cy) >= need;
            if !clear_of(start[0], start[1], params.start_clearance + r) {
                continue;
            }
            if objects
                .iter()
                .all(|o| clear_of(o.center[0], o.center[1], o.footprint_radius() + r + params.min_gap))
            {
                placed = Some(SceneObject { center: [x, y, center_z], ..probe });
                break;
            }
        }
        let mut object = placed.ok_or_else(|| {
            Error::Packing(format!(
                "could not place object {object_id} of {} after {} attempts",
                params.num_objects, params.max_retries
            ))
        })?;
        let proto = &prototypes[&class_name];
        object.clip_embedding = instance_of(&proto.clip, params.instance_spread, &mut proto_rng);
        object.dino_embedding = instance_of(&proto.dino, params.instance_spread, &mut proto_rng);
        objects.push(object);
    }

    Ok(SyntheticScene {
        name: params.name.clone(),
        seed,
        room_size: params.room_size,
        wall_height: params.wall_height,
        floor_z: 0.0,
        start,
        observation_noise: params.observation_noise,
        camera: params.camera.clone(),
        prototypes,
        objects,
    })
}
