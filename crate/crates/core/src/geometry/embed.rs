//! Deterministic pseudo-embeddings and centroids.
//!
//! The pseudo-embedding is a bag of tokens: lowercase, split on runs of
//! non-alphanumeric characters, give each token a random vector seeded by
//! its FNV-1a hash through splitmix64, sum, normalize. It carries no
//! semantics beyond token overlap but is bit-stable across machines.

use std::collections::HashMap;

use super::{GeometryError, Scalar, UnitVector};

pub const DEFAULT_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1): the top 53 bits scaled to [0, 1), then `2u - 1`.
    pub fn next_signed_unit(&mut self) -> f64 {
        let u = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        u * 2.0 - 1.0
    }
}

/// Lowercased alphanumeric tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

/// Deterministic bag-of-tokens embedding. Text without tokens maps to `e_1`.
pub fn pseudo_embed<T: Scalar>(text: &str, dim: usize) -> UnitVector<T> {
    assert!(dim >= 2, "embedding dimension must be at least 2");
    let mut acc = vec![0.0f64; dim];
    let toks = tokenize(text);
    for tok in &toks {
        let mut rng = SplitMix64::new(fnv1a64(tok.as_bytes()));
        for slot in acc.iter_mut() {
            *slot += rng.next_signed_unit();
        }
    }
    let v: Vec<T> = acc
        .into_iter()
        .map(|x| T::from_f64(x).unwrap_or_else(T::zero))
        .collect();
    UnitVector::normalize(v).unwrap_or_else(|| UnitVector::basis(dim, 0))
}

/// Source of query and candidate embeddings.
pub trait Embedder<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> UnitVector<T>;
}

#[derive(Debug, Clone, Copy)]
pub struct PseudoEmbedder {
    pub dim: usize,
}

impl PseudoEmbedder {
    pub fn new(dim: usize) -> Result<Self, GeometryError> {
        if dim < 2 {
            return Err(GeometryError::InvalidDimension(dim));
        }
        Ok(PseudoEmbedder { dim })
    }
}

impl Default for PseudoEmbedder {
    fn default() -> Self {
        PseudoEmbedder { dim: DEFAULT_DIM }
    }
}

impl<T: Scalar> Embedder<T> for PseudoEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> UnitVector<T> {
        pseudo_embed(text, self.dim)
    }
}

/// Exact-match override table in front of the pseudo-embedder.
///
/// Loaded from a JSON object mapping strings to arrays of `dim` numbers;
/// vectors are L2-normalized on load.
#[derive(Debug, Clone)]
pub struct VectorTable<T> {
    vectors: HashMap<String, UnitVector<T>>,
    fallback: PseudoEmbedder,
}

impl<T: Scalar> VectorTable<T> {
    pub fn new(dim: usize) -> Result<Self, GeometryError> {
        Ok(VectorTable {
            vectors: HashMap::new(),
            fallback: PseudoEmbedder::new(dim)?,
        })
    }

    pub fn insert(&mut self, text: impl Into<String>, v: Vec<T>) -> Result<(), GeometryError> {
        let text = text.into();
        if v.len() != self.fallback.dim {
            return Err(GeometryError::VectorTable(format!(
                "entry {text:?} has {} components, expected {}",
                v.len(),
                self.fallback.dim
            )));
        }
        let u = UnitVector::normalize(v)
            .ok_or_else(|| GeometryError::VectorTable(format!("entry {text:?} is a zero vector")))?;
        self.vectors.insert(text, u);
        Ok(())
    }

    pub fn from_json(json: &str, dim: usize) -> Result<Self, GeometryError> {
        let raw: HashMap<String, Vec<f64>> =
            serde_json::from_str(json).map_err(|e| GeometryError::VectorTable(e.to_string()))?;
        let mut table = Self::new(dim)?;
        let mut keys: Vec<_> = raw.into_iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        for (k, v) in keys {
            let v = v.into_iter().map(|x| T::from_f64(x).unwrap_or_else(T::zero)).collect();
            table.insert(k, v)?;
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl<T: Scalar> Embedder<T> for VectorTable<T> {
    fn dim(&self) -> usize {
        self.fallback.dim
    }

    fn embed(&self, text: &str) -> UnitVector<T> {
        match self.vectors.get(text) {
            Some(v) => v.clone(),
            None => pseudo_embed(text, self.fallback.dim),
        }
    }
}

/// Normalized mean of unit vectors.
pub fn centroid_of<T: Scalar>(vectors: &[UnitVector<T>]) -> Result<UnitVector<T>, GeometryError> {
    let first = vectors.first().ok_or(GeometryError::EmptyCandidates)?;
    let dim = first.dim();
    let mut acc = vec![T::zero(); dim];
    for v in vectors {
        if v.dim() != dim {
            return Err(GeometryError::DimensionMismatch(dim, v.dim()));
        }
        for (a, &x) in acc.iter_mut().zip(v.as_slice()) {
            *a = *a + x;
        }
    }
    let n = T::from_usize(vectors.len()).expect("count fits in scalar");
    let mean: Vec<T> = acc.into_iter().map(|x| x / n).collect();
    let norm = mean.iter().map(|&x| x * x).sum::<T>().sqrt();
    // Mean norm this small means the candidates cancel.
    if norm < super::lit(1e-9) {
        return Err(GeometryError::DegenerateCentroid);
    }
    UnitVector::normalize(mean).ok_or(GeometryError::DegenerateCentroid)
}

/// Centroid of the embeddings of `candidates`.
pub fn centroid<T: Scalar, E: Embedder<T> + ?Sized>(
    candidates: &[&str],
    embedder: &E,
) -> Result<UnitVector<T>, GeometryError> {
    if candidates.is_empty() {
        return Err(GeometryError::EmptyCandidates);
    }
    let vs: Vec<UnitVector<T>> = candidates.iter().map(|c| embedder.embed(c)).collect();
    centroid_of(&vs)
}
