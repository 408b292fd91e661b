//! Closed-form expectations of the Monte-Carlo estimators, used as oracles.

use crate::scalar::{compensated_sum, Scalar};
use crate::store::ClassEmbeddings;

use super::{cosine_similarity, SimilarityError};

/// Largest `k` for which [`exact_intra_mean`] enumerates every split.
pub const EXACT_SPLIT_MAX_ROWS: usize = 12;

/// Expected score of one intra-class iteration.
///
/// For `k <= 12` this enumerates every first-half subset of size `k/2`
/// (all equally likely under a uniform permutation) and averages the
/// cross-half mean similarity. Larger classes use the mean over all
/// unordered distinct pairs, which is the same quantity by symmetry.
pub fn exact_intra_mean<T: Scalar>(z: &ClassEmbeddings<T>) -> Result<T, SimilarityError> {
    let k = z.rows();
    if k < 2 {
        return Err(SimilarityError::TooFewRows(z.class_id().to_string()));
    }
    let mut gram = vec![T::zero(); k * k];
    for i in 0..k {
        for j in i..k {
            let c = cosine_similarity(z.row(i), z.row(j))?;
            gram[i * k + j] = c;
            gram[j * k + i] = c;
        }
    }
    if k > EXACT_SPLIT_MAX_ROWS {
        let pairs = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j)));
        let n = k * (k - 1) / 2;
        return Ok(compensated_sum(pairs.map(|(i, j)| gram[i * k + j])) / T::of_usize(n));
    }

    let half = k / 2;
    let cross = T::of_usize(half * (k - half));
    let mut split_means = Vec::new();
    for mask in 0u32..(1 << k) {
        if mask.count_ones() as usize != half {
            continue;
        }
        let first = (0..k).filter(|i| mask & (1 << i) != 0);
        let s = compensated_sum(first.flat_map(|i| {
            let gram = &gram;
            (0..k).filter(move |j| mask & (1 << j) == 0).map(move |j| gram[i * k + j])
        }));
        split_means.push(s / cross);
    }
    Ok(compensated_sum(split_means.iter().copied()) / T::of_usize(split_means.len()))
}

/// Mean similarity over every (row of `zp`, row of `zq`) pair. The scores
/// are summed in sorted order, so swapping the arguments is bit-exact.
pub fn exact_inter_mean<T: Scalar>(zp: &ClassEmbeddings<T>, zq: &ClassEmbeddings<T>) -> Result<T, SimilarityError> {
    if zp.dim() != zq.dim() {
        return Err(SimilarityError::DimensionMismatch {
            left: zp.dim(),
            right: zq.dim(),
        });
    }
    let mut sims = Vec::with_capacity(zp.rows() * zq.rows());
    for a in zp.iter_rows() {
        for b in zq.iter_rows() {
            sims.push(cosine_similarity(a, b)?);
        }
    }
    sims.sort_by(|a, b| a.partial_cmp(b).expect("cosine is finite"));
    Ok(compensated_sum(sims.iter().copied()) / T::of_usize(sims.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(rows: &[Vec<f64>]) -> ClassEmbeddings<f64> {
        ClassEmbeddings::from_rows("c", "s", rows).unwrap()
    }

    fn basis(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
    }

    #[test]
    fn two_rows_is_their_cosine() {
        let (a, b) = (vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]);
        let want = cosine_similarity(&a, &b).unwrap();
        assert_eq!(exact_intra_mean(&cls(&[a, b])).unwrap(), want);
    }

    #[test]
    fn copies_and_basis() {
        assert_eq!(exact_intra_mean(&cls(&vec![vec![2.0, 1.0]; 3])).unwrap(), 1.0);
        assert_eq!(exact_intra_mean(&cls(&basis(4))).unwrap(), 0.0);
    }

    #[test]
    fn large_class_falls_back_to_all_pairs() {
        // 13 rows: 12 basis vectors of R^12 plus one duplicate of e_0
        let mut rows = basis(12);
        rows.push(rows[0].clone());
        let got = exact_intra_mean(&cls(&rows)).unwrap();
        assert!((got - 1.0 / 78.0).abs() < 1e-15);
    }

    #[test]
    fn split_enumeration_equals_pair_average() {
        let rows = vec![
            vec![1.0, 0.3, -0.2],
            vec![0.1, 1.0, 0.4],
            vec![0.6, 0.6, 0.6],
            vec![-0.5, 0.2, 1.0],
            vec![0.9, -0.8, 0.1],
        ];
        let z = cls(&rows);
        let mut sum = 0.0;
        for i in 0..5 {
            for j in i + 1..5 {
                sum += cosine_similarity(&rows[i], &rows[j]).unwrap();
            }
        }
        assert!((exact_intra_mean(&z).unwrap() - sum / 10.0).abs() < 1e-14);
    }

    #[test]
    fn inter_examples() {
        let a = cls(&[vec![1.0, 2.0]]);
        let b = cls(&[vec![2.0, -1.0]]);
        assert_eq!(exact_inter_mean(&a, &b).unwrap(), 0.0);
        let e = cls(&basis(2));
        assert_eq!(exact_inter_mean(&e, &e).unwrap(), 0.5);
        let p = cls(&[vec![1.0, 0.5], vec![-0.3, 2.0]]);
        let p7 = p.scale_rows(&[7.0, 7.0]).unwrap();
        let q = cls(&[vec![0.2, 0.9], vec![1.0, 1.0], vec![3.0, -1.0]]);
        assert!((exact_inter_mean(&p7, &q).unwrap() - exact_inter_mean(&p, &q).unwrap()).abs() < 1e-15);
        assert_eq!(exact_inter_mean(&p, &q).unwrap(), exact_inter_mean(&q, &p).unwrap());
    }
}
