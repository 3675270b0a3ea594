//! Unit-sphere geometry for embedding signals.
//!
//! Everything here is generic over [`Scalar`] (`f32` or `f64`); the crate
//! root re-exports `f64` aliases.

mod cap;
mod embed;
mod voronoi;

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use cap::{caps_intersect, CapRelation, SphericalCap};
pub use embed::{
    centroid, centroid_of, fnv1a64, pseudo_embed, tokenize, Embedder, PseudoEmbedder, SplitMix64, VectorTable,
    DEFAULT_DIM,
};
pub use voronoi::{
    centroid_separation_report, group_fire, voronoi_scores, VoronoiGroup, DEFAULT_WARN_COSINE, MIN_TEMPERATURE,
};

/// Floating-point scalar usable by the geometry routines.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Sum + Send + Sync + 'static {
    /// Tolerance for the unit-norm invariant.
    fn unit_tolerance() -> Self {
        let eps = Self::epsilon() * lit(1e3);
        eps.max(lit(1e-9))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` literal into `T`.
pub(crate) fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("embedding dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("vector has norm {0}, expected a unit vector")]
    NotUnit(f64),
    #[error("degenerate centroid: the candidate embeddings cancel out")]
    DegenerateCentroid,
    #[error("no candidates to build a centroid from")]
    EmptyCandidates,
    #[error("cap threshold {0} must lie strictly between -1 and 1")]
    ThresholdOutOfRange(f64),
    #[error("vector table: {0}")]
    VectorTable(String),
}

/// A vector on the unit hypersphere.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector<T> {
    components: Vec<T>,
}

impl<T: Scalar> UnitVector<T> {
    /// Normalize `v`; `None` for a zero or non-finite vector.
    pub fn normalize(v: Vec<T>) -> Option<Self> {
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if !norm.is_finite() || norm <= T::min_positive_value() {
            return None;
        }
        Some(UnitVector {
            components: v.into_iter().map(|x| x / norm).collect(),
        })
    }

    /// Accept `v` only if it already has unit norm.
    pub fn from_unit(v: Vec<T>) -> Result<Self, GeometryError> {
        let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
        if (norm - T::one()).abs() > T::unit_tolerance() {
            return Err(GeometryError::NotUnit(norm.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(UnitVector { components: v })
    }

    /// The standard basis vector `e_i`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![T::zero(); dim];
        v[i] = T::one();
        UnitVector { components: v }
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.components
    }

    pub fn norm(&self) -> T {
        self.components.iter().map(|&x| x * x).sum::<T>().sqrt()
    }

    /// Cosine similarity, clamped to [-1, 1].
    pub fn cosine(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "cosine of vectors with different dimensions");
        let dot: T = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(&a, &b)| a * b)
            .sum();
        dot.max(-T::one()).min(T::one())
    }

    /// Angle in radians, in [0, π].
    pub fn angle(&self, other: &Self) -> T {
        self.cosine(other).acos()
    }

    pub fn cast<U: Scalar>(&self) -> UnitVector<U> {
        let v: Vec<U> = self
            .components
            .iter()
            .map(|x| U::from_f64(x.to_f64().unwrap_or(0.0)).unwrap_or_else(U::zero))
            .collect();
        UnitVector::normalize(v).expect("cast of a unit vector stays non-zero")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rejects_zero() {
        assert!(UnitVector::<f64>::normalize(vec![0.0, 0.0]).is_none());
        let v = UnitVector::<f64>::normalize(vec![3.0, 4.0]).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_unit_checks_norm() {
        assert!(UnitVector::<f64>::from_unit(vec![1.0, 0.0]).is_ok());
        assert!(matches!(
            UnitVector::<f64>::from_unit(vec![1.0, 1.0]),
            Err(GeometryError::NotUnit(_))
        ));
        assert!(UnitVector::<f32>::from_unit(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn cosine_is_clamped() {
        let v = UnitVector::<f64>::normalize(vec![1.0, 1e-9]).unwrap();
        assert!(v.cosine(&v) <= 1.0);
        assert_eq!(v.angle(&v), 0.0);
    }

    #[test]
    fn f32_and_f64_agree() {
        let a = pseudo_embed::<f64>("spherical cap", 16);
        let b = pseudo_embed::<f32>("spherical cap", 16);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((*x as f32 - y).abs() < 1e-6);
        }
    }
}
