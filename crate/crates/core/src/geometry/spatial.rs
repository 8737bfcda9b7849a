use std::collections::HashMap;

use super::Point;

/// Euclidean distance, evaluated in a fixed operation order so that every
/// threshold comparison in the crate agrees bit-for-bit.
#[inline]
pub(crate) fn distance(a: &Point, b: &Point) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Exact fixed-radius neighbor index: a uniform grid hash whose cell edge is
/// slightly larger than the query radius, so every neighbor lies in one of
/// the 27 cells around the query.
#[derive(Debug, Clone)]
pub struct PointIndex<'a> {
    points: &'a [Point],
    radius: f64,
    inv_cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointIndex<'a> {
    /// `radius` must be finite and non-negative.
    pub fn new(points: &'a [Point], radius: f64) -> Self {
        debug_assert!(radius >= 0.0 && radius.is_finite());
        // Padding the cell absorbs rounding in the division below.
        let cell = if radius > 0.0 { radius * (1.0 + 1e-6) } else { 1.0 };
        let inv_cell = 1.0 / cell;
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, inv_cell)).or_default().push(i as u32);
        }
        Self {
            points,
            radius,
            inv_cell,
            cells,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn candidates(&self, p: &Point) -> impl Iterator<Item = u32> + '_ {
        let [x, y, z] = key(p, self.inv_cell);
        (-1..=1).flat_map(move |dx: i64| {
            (-1..=1).flat_map(move |dy: i64| {
                (-1..=1).flat_map(move |dz: i64| {
                    let k = [x.saturating_add(dx), y.saturating_add(dy), z.saturating_add(dz)];
                    self.cells.get(&k).into_iter().flatten().copied()
                })
            })
        })
    }

    /// True when some indexed point lies within the radius of `p` (inclusive).
    pub fn any_within(&self, p: &Point) -> bool {
        self.candidates(p)
            .any(|i| distance(&self.points[i as usize], p) <= self.radius)
    }

    /// Indices of all points within the radius of `p` (inclusive), in no
    /// particular order.
    pub fn within(&self, p: &Point, out: &mut Vec<u32>) {
        out.clear();
        out.extend(
            self.candidates(p)
                .filter(|&i| distance(&self.points[i as usize], p) <= self.radius),
        );
    }
}

fn key(p: &Point, inv_cell: f64) -> [i64; 3] {
    [
        (p.x * inv_cell).floor() as i64,
        (p.y * inv_cell).floor() as i64,
        (p.z * inv_cell).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_is_inclusive() {
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(0.1, 0.0, 0.0), Point::new(0.3, 0.0, 0.0)];
        let idx = PointIndex::new(&pts, 0.1);
        let mut out = Vec::new();
        idx.within(&Point::new(0.0, 0.0, 0.0), &mut out);
        out.sort();
        assert_eq!(out, [0, 1]);
        assert!(!idx.any_within(&Point::new(0.2 + 1e-9, 0.0, 5.0)));
    }

    #[test]
    fn zero_radius_matches_exact_points_only() {
        let pts = [Point::new(0.25, -1.0, 3.0)];
        let idx = PointIndex::new(&pts, 0.0);
        assert!(idx.any_within(&Point::new(0.25, -1.0, 3.0)));
        assert!(!idx.any_within(&Point::new(0.25, -1.0, 3.0 + 1e-12)));
    }
}
