//! Similarity kernel and the intra-/inter-class Monte-Carlo estimators.

mod exact;
mod monte_carlo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use exact::{exact_inter_mean, exact_intra_mean, EXACT_SPLIT_MAX_ROWS};
pub use monte_carlo::{
    inter_class_similarity, inter_class_similarity_with, intra_class_similarity,
    intra_class_similarity_with,
};

pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("class '{0}' has too few embeddings")]
    TooFewRows(String),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
}

/// Pairwise similarity `phi(a, b)`.
pub trait Kernel<T: Scalar>: Sync {
    fn similarity(&self, a: &[T], b: &[T]) -> Result<T, SimilarityError>;
}

/// Cosine similarity, clamped to `[-1, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl<T: Scalar> Kernel<T> for Cosine {
    fn similarity(&self, a: &[T], b: &[T]) -> Result<T, SimilarityError> {
        cosine_similarity(a, b)
    }
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<T, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        na = na + x * x;
        nb = nb + y * y;
    }
    if na.is_zero() || nb.is_zero() {
        return Err(SimilarityError::ZeroVector);
    }
    // sqrt(x * x) == x exactly, so parallel vectors score exactly 1
    let prod = na * nb;
    let denom = if prod.is_normal() { prod.sqrt() } else { na.sqrt() * nb.sqrt() };
    let c = dot / denom;
    Ok(c.max(-T::one()).min(T::one()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    pub m: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn new(m: usize, seed: u64) -> Result<Self, SimilarityError> {
        if m == 0 {
            return Err(SimilarityError::ZeroIterations);
        }
        Ok(Self { m, seed })
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            m: DEFAULT_ITERATIONS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateKind {
    Intra,
    Inter,
}

/// Mean and dispersion of `m` sampled similarity scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEstimate<T> {
    pub kind: EstimateKind,
    pub snapshot_id: String,
    /// One id for intra-class, `(p, q)` for inter-class estimates.
    pub class_ids: Vec<String>,
    pub mean: T,
    /// Population standard deviation of the per-iteration scores.
    pub std_dev: T,
    pub m: usize,
    pub seed: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0_f64, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0_f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine_similarity(&[1.0_f64, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        // 32 / (sqrt(14) * sqrt(77))
        assert!((c - 0.974_631_846).abs() < 1e-9);
        let c32 = cosine_similarity(&[1.0_f32, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert!((c32 - 0.974_631_85).abs() < 1e-6);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&[1.0_f64], &[1.0, 2.0]),
            Err(SimilarityError::DimensionMismatch { left: 1, right: 2 })
        );
        assert_eq!(cosine_similarity(&[0.0_f64, 0.0], &[1.0, 2.0]), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn cosine_is_clamped() {
        let v = [0.1_f64, 0.2, 0.3, 0.7, 1e-3];
        let c = cosine_similarity(&v, &v).unwrap();
        assert!(c <= 1.0);
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!(cosine_similarity(&v, &w).unwrap() >= -1.0);
    }

    #[test]
    fn zero_iterations_rejected() {
        assert_eq!(SamplingConfig::new(0, 1), Err(SimilarityError::ZeroIterations));
        assert_eq!(SamplingConfig::default().m, 10_000);
    }
}
