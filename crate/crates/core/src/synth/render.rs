use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perturb, rng, stream, Shape, SyntheticScene, FLOOR_LABEL, WALL_LABEL};
use crate::error::{Error, Result};
use crate::frame::{BBox, CameraIntrinsics, DepthImage, Detection, FrameRecord, InstanceMask, Pose};

/// Camera ring at the room center: `views` poses spaced evenly on a circle
/// of `ring_radius`, each looking outward and tilted down by `pitch_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraRig {
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    pub views: usize,
    pub ring_radius: f64,
    pub mount_height: f64,
    pub pitch_deg: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            focal: 260.0,
            views: 16,
            ring_radius: 0.3,
            mount_height: 1.3,
            pitch_deg: -28.0,
        }
    }
}

impl CameraRig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.views == 0 {
            return Err(Error::param("camera", "width, height and views must be >= 1"));
        }
        if !(self.focal > 0.0) || !(self.mount_height > 0.0) || !(self.ring_radius >= 0.0) {
            return Err(Error::param("camera", "focal and mount_height must be > 0"));
        }
        if !(-90.0..90.0).contains(&self.pitch_deg) {
            return Err(Error::param("camera", "pitch_deg must lie in (-90, 90)"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            fx: self.focal,
            fy: self.focal,
            cx: (self.width as f64 - 1.0) / 2.0,
            cy: (self.height as f64 - 1.0) / 2.0,
            width: self.width,
            height: self.height,
        }
    }
}

/// Camera-to-world pose looking along heading `yaw` (radians from +x)
/// tilted by `pitch` (radians, negative is down).
pub fn look_pose(position: [f64; 3], yaw: f64, pitch: f64) -> Pose {
    let right = Vector3::new(yaw.sin(), -yaw.cos(), 0.0);
    let forward = Vector3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), pitch.sin());
    let down = forward.cross(&right);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[right, down, forward]));
    Pose {
        translation: Vector3::from(position),
        rotation: UnitQuaternion::from_rotation_matrix(&rot),
    }
}

pub fn camera_path(scene: &SyntheticScene) -> Vec<Pose> {
    let rig = &scene.camera;
    (0..rig.views)
        .map(|i| {
            let phi = 2.0 * PI * i as f64 / rig.views as f64;
            let position = [
                scene.start[0] + rig.ring_radius * phi.cos(),
                scene.start[1] + rig.ring_radius * phi.sin(),
                scene.floor_z + rig.mount_height,
            ];
            look_pose(position, phi, rig.pitch_deg.to_radians())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    /// Objects covering fewer pixels in a frame are not detected there.
    pub min_mask_pixels: usize,
    /// Also emit floor and wall detections (which map building filters out).
    pub emit_background: bool,
    /// Surfaces farther than this, meters, read as no depth.
    pub max_depth: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { min_mask_pixels: 30, emit_background: true, max_depth: 20.0 }
    }
}

const NO_HIT: u32 = u32::MAX;
const EPS: f64 = 1e-9;

struct Ray {
    o: Vector3<f64>,
    d: Vector3<f64>,
}

fn hit_box(ray: &Ray, center: [f64; 3], size: [f64; 3], yaw: f64) -> Option<f64> {
    let (s, c) = yaw.sin_cos();
    let to_local = |v: Vector3<f64>| Vector3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z);
    let o = to_local(ray.o - Vector3::from(center));
    let d = to_local(ray.d);
    let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        let h = size[i] / 2.0;
        if d[i].abs() < EPS {
            if o[i].abs() > h {
                return None;
            }
            continue;
        }
        let (a, b) = ((-h - o[i]) / d[i], (h - o[i]) / d[i]);
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    (t0 <= t1 && t0 > EPS).then_some(t0)
}

fn hit_sphere(ray: &Ray, center: [f64; 3], r: f64) -> Option<f64> {
    let oc = ray.o - Vector3::from(center);
    let a = ray.d.norm_squared();
    let b = oc.dot(&ray.d);
    let c = oc.norm_squared() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / a;
    (t > EPS).then_some(t)
}

/// Nearest surface along `ray`: `(t, hit id)`. Objects are ids `0..n`, the
/// floor is `n`, the walls `n + 1`.
fn trace(scene: &SyntheticScene, ray: &Ray) -> Option<(f64, u32)> {
    let n = scene.objects.len() as u32;
    let mut best: Option<(f64, u32)> = None;
    let mut offer = |t: Option<f64>, id: u32| {
        if let Some(t) = t {
            if best.is_none_or(|(b, _)| t < b) {
                best = Some((t, id));
            }
        }
    };
    for (i, o) in scene.objects.iter().enumerate() {
        let t = match o.shape {
            Shape::Box { size, yaw } => hit_box(ray, o.center, size, yaw),
            Shape::Sphere { radius } => hit_sphere(ray, o.center, radius),
        };
        offer(t, i as u32);
    }
    let [hx, hy] = [scene.room_size[0] / 2.0, scene.room_size[1] / 2.0];
    let inside = |p: Vector3<f64>, axis: usize| {
        let (a, lim) = if axis == 0 { (p.y, hy) } else { (p.x, hx) };
        a.abs() <= lim && p.z >= scene.floor_z && p.z <= scene.floor_z + scene.wall_height
    };
    if ray.d.z < -EPS {
        let t = (scene.floor_z - ray.o.z) / ray.d.z;
        let p = ray.o + t * ray.d;
        offer((t > EPS && p.x.abs() <= hx && p.y.abs() <= hy).then_some(t), n);
    }
    for (axis, lim) in [(0usize, hx), (1, hy)] {
        if ray.d[axis].abs() < EPS {
            continue;
        }
        for wall in [-lim, lim] {
            let t = (wall - ray.o[axis]) / ray.d[axis];
            offer((t > EPS && inside(ray.o + t * ray.d, axis)).then_some(t), n + 1);
        }
    }
    best
}

/// Depth image plus the per-pixel hit id.
fn rasterize(scene: &SyntheticScene, k: &CameraIntrinsics, pose: &Pose, max_depth: f64) -> (DepthImage, Vec<u32>) {
    let rot = pose.rotation;
    let origin = pose.translation;
    let mut values = vec![0u16; (k.width * k.height) as usize];
    let mut ids = vec![NO_HIT; values.len()];
    for v in 0..k.height {
        for u in 0..k.width {
            let cam = Vector3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let ray = Ray { o: origin, d: rot * cam };
            // The camera-frame direction has unit z, so t is the depth.
            if let Some((t, id)) = trace(scene, &ray) {
                let mm = (t * 1000.0).round();
                if t <= max_depth && (1.0..=u16::MAX as f64).contains(&mm) {
                    let idx = (v * k.width + u) as usize;
                    values[idx] = mm as u16;
                    ids[idx] = id;
                }
            }
        }
    }
    (DepthImage { width: k.width, height: k.height, values }, ids)
}

/// Renders one frame record per pose. Each visible object becomes a
/// detection with its exact mask, class label, confidence 1 and noisy
/// copies of its instance embeddings.
pub fn render_frames(
    scene: &SyntheticScene,
    path: &[Pose],
    k: &CameraIntrinsics,
    options: &RenderOptions,
) -> Vec<FrameRecord> {
    let n = scene.objects.len() as u32;
    path.par_iter()
        .enumerate()
        .map(|(frame_idx, pose)| {
            let (depth, ids) = rasterize(scene, k, pose, options.max_depth);
            let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for (px, &id) in ids.iter().enumerate() {
                if id != NO_HIT {
                    groups.entry(id).or_default().push(px as u32);
                }
            }
            let detections = groups
                .into_iter()
                .filter(|(id, px)| px.len() >= options.min_mask_pixels && (*id < n || options.emit_background))
                .map(|(id, px)| {
                    let (label, clip, dino) = if id < n {
                        let o = &scene.objects[id as usize];
                        (o.class_name.as_str(), &o.clip_embedding, &o.dino_embedding)
                    } else {
                        let label = if id == n { FLOOR_LABEL } else { WALL_LABEL };
                        let p = &scene.prototypes[label];
                        (label, &p.clip, &p.dino)
                    };
                    let mut r = rng(
                        scene.seed,
                        (stream::OBSERVATION << 48) | ((frame_idx as u64) << 24) | id as u64,
                    );
                    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
                    for &p in &px {
                        let (x, y) = (p % k.width, p / k.width);
                        (x0, y0, x1, y1) = (x0.min(x), y0.min(y), x1.max(x), y1.max(y));
                    }
                    Detection {
                        label: label.to_string(),
                        bbox: BBox {
                            x_min: x0 as f64,
                            y_min: y0 as f64,
                            x_max: x1 as f64 + 1.0,
                            y_max: y1 as f64 + 1.0,
                        },
                        confidence: 1.0,
                        mask: InstanceMask::encode(k.width, k.height, &px).expect("non-empty mask"),
                        clip_embedding: perturb(clip, scene.observation_noise, &mut r),
                        dino_embedding: perturb(dino, scene.observation_noise, &mut r),
                    }
                })
                .collect();
            FrameRecord {
                frame_id: frame_idx as u64,
                intrinsics: *k,
                pose: *pose,
                depth,
                detections,
            }
        })
        .collect()
}
