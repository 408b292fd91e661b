use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::rng::substream;
use crate::scalar::{mean, population_std, Scalar};
use crate::store::ClassEmbeddings;

use super::{Cosine, EstimateKind, Kernel, SamplingConfig, SimilarityError, SimilarityEstimate};

/// Intra-class similarity with the cosine kernel.
pub fn intra_class_similarity<T: Scalar>(
    z: &ClassEmbeddings<T>,
    cfg: SamplingConfig,
) -> Result<SimilarityEstimate<T>, SimilarityError> {
    intra_class_similarity_with(&Cosine, z, cfg)
}

/// Each iteration permutes the rows, splits them into the first `k/2`
/// (integer division) and the remainder, draws one row from each half and
/// scores the pair. Iteration `j` uses substream `(seed, j)`.
pub fn intra_class_similarity_with<T: Scalar, K: Kernel<T>>(
    kernel: &K,
    z: &ClassEmbeddings<T>,
    cfg: SamplingConfig,
) -> Result<SimilarityEstimate<T>, SimilarityError> {
    let k = z.rows();
    if k < 2 {
        return Err(SimilarityError::TooFewRows(z.class_id().to_string()));
    }
    if cfg.m == 0 {
        return Err(SimilarityError::ZeroIterations);
    }
    let half = k / 2;
    let scores = (0..cfg.m)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(k),
            |order: &mut Vec<usize>, j| {
                let mut rng = substream(cfg.seed, j as u64);
                order.clear();
                order.extend(0..k);
                order.shuffle(&mut rng);
                let first = order[rng.random_range(0..half)];
                let second = order[half + rng.random_range(0..k - half)];
                kernel.similarity(z.row(first), z.row(second))
            },
        )
        .collect::<Result<Vec<T>, _>>()?;
    Ok(summarize(
        EstimateKind::Intra,
        z.snapshot_id(),
        vec![z.class_id().to_string()],
        &scores,
        cfg,
    ))
}

/// Inter-class similarity with the cosine kernel.
pub fn inter_class_similarity<T: Scalar>(
    zp: &ClassEmbeddings<T>,
    zq: &ClassEmbeddings<T>,
    cfg: SamplingConfig,
) -> Result<SimilarityEstimate<T>, SimilarityError> {
    inter_class_similarity_with(&Cosine, zp, zq, cfg)
}

/// Each iteration draws one row of `zp` and one of `zq` independently.
pub fn inter_class_similarity_with<T: Scalar, K: Kernel<T>>(
    kernel: &K,
    zp: &ClassEmbeddings<T>,
    zq: &ClassEmbeddings<T>,
    cfg: SamplingConfig,
) -> Result<SimilarityEstimate<T>, SimilarityError> {
    if zp.dim() != zq.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: zp.dim(),
            right: zq.dim(),
        });
    }
    if cfg.m == 0 {
        return Err(SimilarityError::ZeroIterations);
    }
    let (kp, kq) = (zp.rows(), zq.rows());
    let scores = (0..cfg.m)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(cfg.seed, j as u64);
            let p = rng.random_range(0..kp);
            let q = rng.random_range(0..kq);
            kernel.similarity(zp.row(p), zq.row(q))
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(summarize(
        EstimateKind::Inter,
        zp.snapshot_id(),
        vec![zp.class_id().to_string(), zq.class_id().to_string()],
        &scores,
        cfg,
    ))
}

fn summarize<T: Scalar>(
    kind: EstimateKind,
    snapshot_id: &str,
    class_ids: Vec<String>,
    scores: &[T],
    cfg: SamplingConfig,
) -> SimilarityEstimate<T> {
    let mu = mean(scores).expect("m >= 1");
    SimilarityEstimate {
        kind,
        snapshot_id: snapshot_id.to_string(),
        class_ids,
        mean: mu.max(-T::one()).min(T::one()),
        std_dev: population_std(scores, mu),
        m: scores.len(),
        seed: cfg.seed,
    }
}
