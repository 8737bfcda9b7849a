use std::collections::BTreeMap;

use nalgebra::Vector3;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

/// Grid cell containing `p` for a grid anchored at the origin.
pub fn voxel_key(p: &Point, voxel_size: f64) -> [i64; 3] {
    [
        (p.x / voxel_size).floor() as i64,
        (p.y / voxel_size).floor() as i64,
        (p.z / voxel_size).floor() as i64,
    ]
}

struct Cell {
    sum: Vector3<f64>,
    count: usize,
    lo: Point,
    hi: Point,
}

/// Replaces the points in each occupied voxel with their centroid.
///
/// Output is ordered by voxel key. Each centroid is clamped to the range of
/// its member coordinates so rounding can never move it into a neighboring
/// voxel; this makes the operation idempotent.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::param("voxel_size", format!("must be > 0, got {voxel_size}")));
    }
    let mut cells: BTreeMap<[i64; 3], Cell> = BTreeMap::new();
    for p in &cloud.points {
        cells
            .entry(voxel_key(p, voxel_size))
            .and_modify(|c| {
                c.sum += p.coords;
                c.count += 1;
                c.lo = c.lo.inf(p);
                c.hi = c.hi.sup(p);
            })
            .or_insert(Cell {
                sum: p.coords,
                count: 1,
                lo: *p,
                hi: *p,
            });
    }
    Ok(cells
        .into_values()
        .map(|c| {
            let mean = c.sum / c.count as f64;
            Point::new(
                mean.x.clamp(c.lo.x, c.hi.x),
                mean.y.clamp(c.lo.y, c.hi.y),
                mean.z.clamp(c.lo.z, c.hi.z),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    #[test]
    fn single_voxel_centroid() {
        let pts = [
            (0.01, 0.01, 0.01),
            (0.02, 0.01, 0.01),
            (0.01, 0.02, 0.01),
            (0.01, 0.01, 0.02),
            (0.015, 0.015, 0.015),
        ];
        let c: PointCloud = pts.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
        let out = voxel_downsample(&c, 0.025).unwrap();
        assert_eq!(out.len(), 1);
        let expect = Point::new(0.013, 0.013, 0.013);
        assert!((out.points[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn sparse_line_unchanged_in_count() {
        let c: PointCloud = (0..20).map(|i| Point::new(i as f64 * 0.1 + 0.01, 0.0, 0.0)).collect();
        assert_eq!(voxel_downsample(&c, 0.05).unwrap().len(), 20);
    }

    #[test]
    fn rejects_bad_size() {
        assert!(voxel_downsample(&PointCloud::default(), 0.0).is_err());
        assert!(voxel_downsample(&PointCloud::default(), -1.0).is_err());
    }

    #[test]
    fn idempotent_on_10k_points_against_hash_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let size = 0.025;
        let c: PointCloud = (0..10_000)
            .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5)))
            .collect();
        let once = voxel_downsample(&c, size).unwrap();

        // Oracle: occupied voxel set from a plain hash of the inputs.
        let mut occupied: HashMap<[i64; 3], usize> = HashMap::new();
        for p in &c.points {
            *occupied.entry(voxel_key(p, size)).or_default() += 1;
        }
        assert_eq!(once.len(), occupied.len());
        for p in &once.points {
            assert!(occupied.contains_key(&voxel_key(p, size)));
        }
        assert_eq!(voxel_downsample(&once, size).unwrap(), once);
    }

    proptest! {
        #[test]
        fn one_point_per_voxel_inside_it(
            pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 0..400),
            size in 0.01f64..0.5,
        ) {
            let c: PointCloud = pts.iter().map(|&(x, y, z)| Point::new(x, y, z)).collect();
            let out = voxel_downsample(&c, size).unwrap();
            prop_assert!(out.len() <= c.len());
            let keys: std::collections::HashSet<_> = out.points.iter().map(|p| voxel_key(p, size)).collect();
            prop_assert_eq!(keys.len(), out.len());
            let input_keys: std::collections::HashSet<_> = c.points.iter().map(|p| voxel_key(p, size)).collect();
            prop_assert_eq!(keys, input_keys);
        }
    }
}
