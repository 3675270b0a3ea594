//! Temperature-scaled softmax over a group's similarities.
//!
//! The scores of a group sum to one, so when the firing threshold exceeds
//! `1/k` at most one member can clear it.

use super::{lit, GeometryError, Scalar, UnitVector};

/// Temperatures below this are clamped.
pub const MIN_TEMPERATURE: f64 = 1e-6;

/// Default cosine above which two group centroids are flagged as too close.
pub const DEFAULT_WARN_COSINE: f64 = 0.95;

/// `softmax(sims / temperature)`, computed with max-subtraction.
pub fn voronoi_scores<T: Scalar>(sims: &[T], temperature: T) -> Vec<T> {
    if sims.is_empty() {
        return Vec::new();
    }
    let t = temperature.max(lit(MIN_TEMPERATURE));
    let max = sims.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = sims.iter().map(|&s| ((s - max) / t).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Indices whose score is strictly greater than `threshold`.
pub fn group_fire<T: Scalar>(scores: &[T], threshold: T) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| i)
        .collect()
}

/// Pairs `(i, j, cos)` with `i < j` and `cos >= warn_cosine`, sorted by
/// descending cosine (ties by index).
pub fn centroid_separation_report<T: Scalar>(centroids: &[UnitVector<T>], warn_cosine: T) -> Vec<(usize, usize, T)> {
    let mut out = Vec::new();
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            let c = centroids[i].cosine(&centroids[j]);
            if c >= warn_cosine {
                out.push((i, j, c));
            }
        }
    }
    out.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    out
}

/// A softmax-exclusive group of centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiGroup<T> {
    centroids: Vec<UnitVector<T>>,
    temperature: T,
    group_threshold: T,
}

impl<T: Scalar> VoronoiGroup<T> {
    pub fn new(centroids: Vec<UnitVector<T>>, temperature: T, group_threshold: T) -> Result<Self, GeometryError> {
        if let Some(first) = centroids.first() {
            if let Some(bad) = centroids.iter().find(|c| c.dim() != first.dim()) {
                return Err(GeometryError::DimensionMismatch(first.dim(), bad.dim()));
            }
        }
        Ok(VoronoiGroup {
            centroids,
            temperature,
            group_threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[UnitVector<T>] {
        &self.centroids
    }

    pub fn temperature(&self) -> T {
        self.temperature
    }

    pub fn group_threshold(&self) -> T {
        self.group_threshold
    }

    /// Whether the group threshold exceeds `1/k`.
    pub fn guarantees_exclusion(&self) -> bool {
        self.group_threshold >= lit(0.5)
    }

    pub fn similarities(&self, query: &UnitVector<T>) -> Vec<T> {
        self.centroids.iter().map(|c| query.cosine(c)).collect()
    }

    pub fn scores(&self, query: &UnitVector<T>) -> Vec<T> {
        voronoi_scores(&self.similarities(query), self.temperature)
    }

    pub fn fire(&self, query: &UnitVector<T>) -> Vec<usize> {
        group_fire(&self.scores(query), self.group_threshold)
    }
}
