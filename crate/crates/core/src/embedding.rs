//! Dense embedding vectors and the similarity measures defined over them.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Rescales `v` to unit L2 norm. Returns `None` for zero or non-finite input.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if !n.is_finite() || n == 0.0 {
        return None;
    }
    Some(v.iter().map(|x| x / n).collect())
}

/// Cosine similarity in `[-1, 1]`.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::param(
            "embedding",
            format!("dimension mismatch ({} vs {})", a.len(), b.len()),
        ));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::param("embedding", "zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Cosine similarity affinely mapped to `[0, 1]`: `(1 + cos) / 2`.
///
/// Used as the semantic gate when deciding whether two observations are the
/// same object (on the self-supervised visual embeddings).
pub fn semantic_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(0.5 * (1.0 + cosine(a, b)?))
}

/// Weighted sum of two embeddings, renormalized.
pub(crate) fn weighted_fuse(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Option<Vec<f64>> {
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    normalized(&sum)
}
