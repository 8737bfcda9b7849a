use super::{spatial::PointIndex, PointCloud};
use crate::error::{Error, Result};

/// Volumetric overlap: the fraction of points in `source` that have a
/// neighbor in `target` within `delta_nn` (inclusive).
///
/// An empty `target` overlaps nothing and yields 0.
pub fn nnratio(source: &PointCloud, target: &PointCloud, delta_nn: f64) -> Result<f64> {
    if source.is_empty() {
        return Err(Error::UndefinedInput("overlap ratio of an empty source cloud"));
    }
    if !(delta_nn >= 0.0 && delta_nn.is_finite()) {
        return Err(Error::param("delta_nn", format!("must be finite and >= 0, got {delta_nn}")));
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let index = PointIndex::new(&target.points, delta_nn);
    let hits = source.points.iter().filter(|p| index.any_within(p)).count();
    Ok(hits as f64 / source.len() as f64)
}

/// The larger of the two directed overlap ratios.
pub fn symmetric_overlap(a: &PointCloud, b: &PointCloud, delta_nn: f64) -> Result<f64> {
    Ok(nnratio(a, b, delta_nn)?.max(nnratio(b, a, delta_nn)?))
}
