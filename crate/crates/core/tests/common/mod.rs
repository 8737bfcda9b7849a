//! Brute-force reference implementations and fixtures shared by the
//! integration suites. Each oracle is written from the definition, with no
//! spatial indexing or early exits, so it can be trusted on small inputs.
#![allow(dead_code)]

use std::collections::BTreeMap;

use o3dsim::geometry::{aabb_of, Point, PointCloud};
use o3dsim::map::{SceneNode, SourceRef};
use o3dsim::nav::{CellState, OccupancyGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dist(a: &Point, b: &Point) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Fraction of `source` points with some `target` point at distance <= delta.
pub fn brute_nnratio(source: &[Point], target: &[Point], delta: f64) -> f64 {
    let hits = source
        .iter()
        .filter(|p| target.iter().any(|q| dist(p, q) <= delta))
        .count();
    hits as f64 / source.len() as f64
}

pub fn brute_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    0.5 * (1.0 + dot / (na * nb))
}

/// Textbook DBSCAN: visit points in index order, grow each new cluster from
/// an unvisited core point with an explicit queue. Noise is -1.
pub fn sequential_dbscan(points: &[Point], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let region = |i: usize| -> Vec<usize> { (0..n).filter(|&j| dist(&points[i], &points[j]) <= eps).collect() };
    let mut label: Vec<Option<i32>> = vec![None; n];
    let mut next = 0;
    for i in 0..n {
        if label[i].is_some() {
            continue;
        }
        let nb = region(i);
        if nb.len() < min_pts {
            label[i] = Some(-1);
            continue;
        }
        let c = next;
        next += 1;
        label[i] = Some(c);
        let mut queue: Vec<usize> = nb;
        let mut k = 0;
        while k < queue.len() {
            let j = queue[k];
            k += 1;
            match label[j] {
                Some(-1) => label[j] = Some(c),
                None => {
                    label[j] = Some(c);
                    let nj = region(j);
                    if nj.len() >= min_pts {
                        queue.extend(nj);
                    }
                }
                _ => {}
            }
        }
    }
    label.into_iter().map(|l| l.unwrap()).collect()
}

/// Renumbers clusters by first appearance so two labelings can be compared
/// up to relabeling. Noise stays -1.
pub fn canonical(labels: &[i32]) -> Vec<i32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            if l < 0 {
                return -1;
            }
            let next = map.len() as i32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// A random cloud of up to `max_points` points: a few Gaussian-ish blobs
/// plus uniform clutter, snapped to a 1 cm lattice so neighbor distances
/// often land exactly on the radius.
pub fn random_cloud(r: &mut ChaCha8Rng, max_points: usize) -> Vec<Point> {
    let n = r.random_range(1..=max_points);
    let blobs: Vec<[f64; 3]> = (0..r.random_range(1..=4))
        .map(|_| [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5), r.random_range(0.0..0.5)])
        .collect();
    let snap = |v: f64| (v * 100.0).round() / 100.0;
    (0..n)
        .map(|_| {
            if r.random_bool(0.2) {
                Point::new(snap(r.random_range(-0.6..0.6)), snap(r.random_range(-0.6..0.6)), snap(r.random_range(0.0..0.6)))
            } else {
                let b = blobs[r.random_range(0..blobs.len())];
                let s = r.random_range(0.02..0.12);
                Point::new(
                    snap(b[0] + r.random_range(-s..s)),
                    snap(b[1] + r.random_range(-s..s)),
                    snap(b[2] + r.random_range(-s..s)),
                )
            }
        })
        .collect()
}

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_unit(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-3 {
            return unit(v);
        }
    }
}

pub fn node(id: u32, points: Vec<Point>, dino: Vec<f64>, detections: usize, label: &str) -> SceneNode {
    let cloud = PointCloud::new(points);
    SceneNode {
        node_id: id,
        bbox: aabb_of(&cloud).unwrap(),
        cloud,
        clip_embedding: dino.clone(),
        dino_embedding: dino,
        source_frames: (0..detections)
            .map(|i| SourceRef { frame_id: u64::from(id) * 1000 + i as u64, detection: 0 })
            .collect(),
        label_histogram: BTreeMap::from([(label.to_string(), detections as u32)]),
    }
}

/// Dense box of lattice points with spacing `step`.
pub fn block(min: [f64; 3], size: [f64; 3], step: f64) -> Vec<Point> {
    let n = |s: f64| (s / step).round() as usize + 1;
    let (nx, ny, nz) = (n(size[0]), n(size[1]), n(size[2]));
    let mut out = Vec::with_capacity(nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                out.push(Point::new(
                    min[0] + i as f64 * step,
                    min[1] + j as f64 * step,
                    min[2] + k as f64 * step,
                ));
            }
        }
    }
    out
}

/// A grid with random rectangular obstacles and scattered occupied cells.
pub fn random_grid(r: &mut ChaCha8Rng) -> OccupancyGrid {
    let cell = [0.05, 0.1, 0.2][r.random_range(0..3)];
    let (w, h) = (r.random_range(8..70), r.random_range(8..70));
    let origin = [r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)];
    let mut g = OccupancyGrid::new(origin, cell, w, h);
    for _ in 0..r.random_range(0..8) {
        let (r0, c0) = (r.random_range(0..h), r.random_range(0..w));
        let (dh, dw) = (r.random_range(1..h / 2 + 2), r.random_range(1..w / 2 + 2));
        for row in r0..(r0 + dh).min(h) {
            for col in c0..(c0 + dw).min(w) {
                g.set(row, col, CellState::Occupied);
            }
        }
    }
    let density = r.random_range(0.0..0.08);
    for row in 0..h {
        for col in 0..w {
            if r.random_bool(density) {
                g.set(row, col, CellState::Occupied);
            }
        }
    }
    g
}

/// Inflation from the definition: a free cell becomes inflated when any
/// occupied cell lies within the radius, center to center.
pub fn brute_inflate(g: &OccupancyGrid, radius: f64) -> Vec<CellState> {
    let occupied: Vec<(usize, usize)> = (0..g.height)
        .flat_map(|r| (0..g.width).map(move |c| (r, c)))
        .filter(|&(r, c)| g.state(r, c) == CellState::Occupied)
        .collect();
    let mut out = g.cells.clone();
    for r in 0..g.height {
        for c in 0..g.width {
            let s = g.state(r, c);
            if s == CellState::Occupied {
                continue;
            }
            let near = occupied.iter().any(|&(orow, ocol)| {
                let dy = (r as f64 - orow as f64) * g.cell_size;
                let dx = (c as f64 - ocol as f64) * g.cell_size;
                dx * dx + dy * dy <= radius * radius
            });
            out[r * g.width + c] = if near { CellState::Inflated } else { CellState::Free };
        }
    }
    out
}

/// Depth-first 8-connected flood fill over free cells.
pub fn flood_fill(g: &OccupancyGrid, start: (usize, usize)) -> Vec<bool> {
    let mut seen = vec![false; g.cells.len()];
    let mut stack = vec![start];
    while let Some((r, c)) = stack.pop() {
        let i = r * g.width + c;
        if seen[i] || !g.state(r, c).is_free() {
            continue;
        }
        seen[i] = true;
        for (dr, dc) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr >= 0 && nc >= 0 && (nr as usize) < g.height && (nc as usize) < g.width {
                stack.push((nr as usize, nc as usize));
            }
        }
    }
    seen
}

/// Nearest reachable cell center to `p` by scanning the whole grid; ties go
/// to the smallest (row, col).
pub fn brute_goal(g: &OccupancyGrid, p: [f64; 2]) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for r in 0..g.height {
        for c in 0..g.width {
            if g.state(r, c) != CellState::Reachable {
                continue;
            }
            let [x, y] = g.center(r, c);
            let d2 = (x - p[0]).powi(2) + (y - p[1]).powi(2);
            if best.is_none_or(|(bd, _, _)| d2 < bd) {
                best = Some((d2, r, c));
            }
        }
    }
    best.map(|(_, r, c)| (r, c))
}

pub fn squared_distance(g: &OccupancyGrid, cell: (usize, usize), p: [f64; 2]) -> f64 {
    let [x, y] = g.center(cell.0, cell.1);
    (x - p[0]).powi(2) + (y - p[1]).powi(2)
}
