use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::InstanceMap;

/// Largest grid `build_grid` will allocate.
const MAX_CELLS: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CellState {
    Occupied,
    Inflated,
    Free,
    /// Free and connected to the robot's start cell.
    Reachable,
}

impl CellState {
    pub fn is_free(self) -> bool {
        matches!(self, CellState::Free | CellState::Reachable)
    }
}

/// Top-down grid. Column index grows with world x, row index with world y;
/// cell `(0, 0)` has its lower-left corner at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<CellState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GoalPoint {
    pub x: f64,
    pub y: f64,
    pub row: usize,
    pub col: usize,
    pub node_id: u32,
}

impl OccupancyGrid {
    /// An all-free grid.
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Self {
        Self {
            origin,
            cell_size,
            width,
            height,
            cells: vec![CellState::Free; width * height],
        }
    }

    pub fn state(&self, row: usize, col: usize) -> CellState {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, state: CellState) {
        self.cells[row * self.width + col] = state;
    }

    pub fn count(&self, state: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    fn index_along(&self, v: f64, origin: f64) -> i64 {
        ((v - origin) / self.cell_size).floor() as i64
    }

    /// Unbounded cell coordinates `(row, col)` of a world point.
    fn raw_cell(&self, x: f64, y: f64) -> (i64, i64) {
        (self.index_along(y, self.origin[1]), self.index_along(x, self.origin[0]))
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (r, c) = self.raw_cell(x, y);
        (r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width)
            .then_some((r as usize, c as usize))
    }

    /// World coordinates of a cell center.
    pub fn center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            self.origin[0] + (col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (row as f64 + 0.5) * self.cell_size,
        ]
    }

    fn squared_distance(&self, row: usize, col: usize, p: [f64; 2]) -> f64 {
        let c = self.center(row, col);
        let (dx, dy) = (c[0] - p[0], c[1] - p[1]);
        dx * dx + dy * dy
    }

    /// Marks every free cell whose center is within `robot_radius` of an
    /// occupied cell's center as inflated. Reachability marks are cleared.
    pub fn inflate(&self, robot_radius: f64) -> Result<OccupancyGrid> {
        if !(robot_radius >= 0.0 && robot_radius.is_finite()) {
            return Err(Error::param("robot_radius", format!("must be >= 0, got {robot_radius}")));
        }
        let mut out = self.clone();
        for c in out.cells.iter_mut().filter(|c| **c == CellState::Reachable) {
            *c = CellState::Free;
        }
        let reach = (robot_radius / self.cell_size).floor() as i64 + 1;
        let r2 = robot_radius * robot_radius;
        let kernel: Vec<(i64, i64)> = (-reach..=reach)
            .flat_map(|dr| (-reach..=reach).map(move |dc| (dr, dc)))
            .filter(|&(dr, dc)| {
                let (y, x) = (dr as f64 * self.cell_size, dc as f64 * self.cell_size);
                (dr, dc) != (0, 0) && x * x + y * y <= r2
            })
            .collect();
        if kernel.is_empty() {
            return Ok(out);
        }
        for row in 0..self.height {
            for col in 0..self.width {
                if self.state(row, col) != CellState::Occupied {
                    continue;
                }
                for &(dr, dc) in &kernel {
                    let (r, c) = (row as i64 + dr, col as i64 + dc);
                    if r < 0 || c < 0 || r as usize >= self.height || c as usize >= self.width {
                        continue;
                    }
                    let (r, c) = (r as usize, c as usize);
                    if out.state(r, c) == CellState::Free {
                        out.set(r, c, CellState::Inflated);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Breadth-first flood over 8-connected free cells from `start`.
    pub fn mark_reachable(&self, start: [f64; 2]) -> Result<OccupancyGrid> {
        let (x, y) = (start[0], start[1]);
        let (sr, sc) = self.cell_of(x, y).ok_or(Error::InvalidStart {
            x,
            y,
            reason: "lies outside the grid",
        })?;
        if !self.state(sr, sc).is_free() {
            return Err(Error::InvalidStart {
                x,
                y,
                reason: "is on an occupied or inflated cell",
            });
        }
        let mut out = self.clone();
        for c in out.cells.iter_mut().filter(|c| **c == CellState::Reachable) {
            *c = CellState::Free;
        }
        let mut queue = VecDeque::from([(sr, sc)]);
        out.set(sr, sc, CellState::Reachable);
        while let Some((r, c)) = queue.pop_front() {
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr as usize >= out.height || nc as usize >= out.width {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if out.state(nr, nc) == CellState::Free {
                        out.set(nr, nc, CellState::Reachable);
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reachable cell whose center is nearest to `point`; smallest
    /// `(row, col)` among equally near cells.
    ///
    /// Searches square rings outward from the point's cell and stops once a
    /// ring cannot beat the best distance found.
    pub fn closest_reachable(&self, point: [f64; 2]) -> Result<(usize, usize)> {
        if !self.cells.contains(&CellState::Reachable) {
            return Err(Error::Unreachable);
        }
        let (r0, c0) = self.raw_cell(point[0], point[1]);
        let (h, w) = (self.height as i64, self.width as i64);
        let k_max = [(0, 0), (0, w - 1), (h - 1, 0), (h - 1, w - 1)]
            .iter()
            .map(|&(r, c)| (r - r0).abs().max((c - c0).abs()))
            .max()
            .unwrap_or(0);

        let mut best: Option<(f64, usize, usize)> = None;
        let consider = |r: i64, c: i64, best: &mut Option<(f64, usize, usize)>| {
            if r < 0 || c < 0 || r >= h || c >= w {
                return;
            }
            let (r, c) = (r as usize, c as usize);
            if self.state(r, c) != CellState::Reachable {
                return;
            }
            let d2 = self.squared_distance(r, c, point);
            let better = match *best {
                None => true,
                Some((bd, br, bc)) => d2 < bd || (d2 == bd && (r, c) < (br, bc)),
            };
            if better {
                *best = Some((d2, r, c));
            }
        };

        for k in 0..=k_max {
            if let Some((bd, _, _)) = best {
                // The point sits inside its own cell, so any center on ring k
                // is at least (k - 1/2) cells away along one axis.
                let bound = (k as f64 - 0.5) * self.cell_size * (1.0 - 1e-9);
                if bound * bound > bd {
                    break;
                }
            }
            if k == 0 {
                consider(r0, c0, &mut best);
                continue;
            }
            for dc in -k..=k {
                consider(r0 - k, c0 + dc, &mut best);
                consider(r0 + k, c0 + dc, &mut best);
            }
            for dr in (-k + 1)..k {
                consider(r0 + dr, c0 - k, &mut best);
                consider(r0 + dr, c0 + k, &mut best);
            }
        }
        best.map(|(_, r, c)| (r, c)).ok_or(Error::Unreachable)
    }
}

/// Projects map points into a top-down grid covering every point plus
/// `padding` meters. A cell is occupied when a point with `z` inside
/// `z_band` (inclusive, absolute world heights) falls into it.
pub fn build_grid(
    map: &InstanceMap,
    cell_size: f64,
    z_band: (f64, f64),
    padding: f64,
) -> Result<OccupancyGrid> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(Error::param("cell_size", format!("must be > 0, got {cell_size}")));
    }
    if !(z_band.0 < z_band.1) {
        return Err(Error::param("z_band", format!("z_min {} must be below z_max {}", z_band.0, z_band.1)));
    }
    if !(padding >= 0.0 && padding.is_finite()) {
        return Err(Error::param("grid_padding", format!("must be >= 0, got {padding}")));
    }
    let mut points = map.nodes().flat_map(|n| n.cloud.points.iter()).peekable();
    if points.peek().is_none() {
        return Err(Error::NoInstances);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in map.nodes().flat_map(|n| n.cloud.points.iter()) {
        lo = [lo[0].min(p.x), lo[1].min(p.y)];
        hi = [hi[0].max(p.x), hi[1].max(p.y)];
    }
    let origin = [lo[0] - padding, lo[1] - padding];
    let mut grid = OccupancyGrid::new(origin, cell_size, 0, 0);
    let width = grid.index_along(hi[0] + padding, origin[0]) as usize + 1;
    let height = grid.index_along(hi[1] + padding, origin[1]) as usize + 1;
    if width.saturating_mul(height) > MAX_CELLS {
        return Err(Error::param("cell_size", format!("grid of {width}x{height} cells is too large")));
    }
    grid = OccupancyGrid::new(origin, cell_size, width, height);

    for p in map.nodes().flat_map(|n| n.cloud.points.iter()) {
        if p.z < z_band.0 || p.z > z_band.1 {
            continue;
        }
        let (r, c) = grid.raw_cell(p.x, p.y);
        let r = r.clamp(0, height as i64 - 1) as usize;
        let c = c.clamp(0, width as i64 - 1) as usize;
        grid.set(r, c, CellState::Occupied);
    }
    Ok(grid)
}

/// Goal for a node: the reachable cell nearest its centroid's projection.
pub fn goal_for(map: &InstanceMap, grid: &OccupancyGrid, node_id: u32) -> Result<GoalPoint> {
    let node = map.node(node_id).ok_or(Error::NodeNotFound(node_id))?;
    let centroid = node.cloud.centroid().ok_or(Error::NodeNotFound(node_id))?;
    let (row, col) = grid.closest_reachable([centroid.x, centroid.y])?;
    let [x, y] = grid.center(row, col);
    Ok(GoalPoint { x, y, row, col, node_id })
}
