//! Image association tests: the per-image statistic `s`, the differential
//! association `d`, its standardized effect size and a one-sided
//! permutation test over target-set membership.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;
use crate::scalar::{compensated_sum, mean, sample_std, Scalar};
use crate::similarity::{cosine_similarity, SimilarityError};
use crate::store::ClassEmbeddings;

pub const DEFAULT_PERMUTATIONS: u64 = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssociationError {
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("pooled s-values are constant, effect size undefined")]
    DegenerateVariance,
    #[error("permutation count must be at least 1")]
    ZeroPermutations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    /// Enumerate every partition when there are at most `n_perm` of them.
    #[default]
    Auto,
    /// Always draw `n_perm` random partitions.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationConfig {
    pub n_perm: u64,
    pub seed: u64,
    pub mode: PermutationMode,
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            n_perm: DEFAULT_PERMUTATIONS,
            seed: 0,
            mode: PermutationMode::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult<T> {
    /// `(c_w, c_m, c_1, c_2)`.
    pub tuple_ids: [String; 4],
    /// Unnormalized differential association.
    pub d: T,
    /// `None` when the pooled s-values have no spread.
    pub effect_size: Option<T>,
    pub p_value: f64,
    /// Partitions evaluated; in exact mode this is `C(n1 + n2, n1)`.
    pub n_permutations: u64,
    pub exact: bool,
    pub seed: u64,
}

fn common_dim<T: Scalar>(sets: &[&ClassEmbeddings<T>]) -> Result<usize, SimilarityError> {
    let dim = sets[0].dim();
    for z in sets {
        if z.dim() != dim {
            return Err(SimilarityError::DimensionMismatch { left: dim, right: z.dim() });
        }
    }
    Ok(dim)
}

fn mean_similarity<T: Scalar>(x: &[T], z: &ClassEmbeddings<T>) -> Result<T, SimilarityError> {
    let sims = z
        .iter_rows()
        .map(|row| cosine_similarity(x, row))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(mean(&sims).expect("class has rows"))
}

/// `s(x) = mean_k cos(x, w_k) - mean_t cos(x, m_t)`.
pub fn association_s<T: Scalar>(
    x: &[T],
    zw: &ClassEmbeddings<T>,
    zm: &ClassEmbeddings<T>,
) -> Result<T, SimilarityError> {
    common_dim(&[zw, zm])?;
    if x.len() != zw.dim() {
        return Err(SimilarityError::DimensionMismatch { left: x.len(), right: zw.dim() });
    }
    Ok(mean_similarity(x, zw)? - mean_similarity(x, zm)?)
}

/// s-values of every row of `z`, in row order.
pub fn s_values<T: Scalar>(
    z: &ClassEmbeddings<T>,
    zw: &ClassEmbeddings<T>,
    zm: &ClassEmbeddings<T>,
) -> Result<Vec<T>, SimilarityError> {
    z.iter_rows().map(|x| association_s(x, zw, zm)).collect()
}

/// Statistic of one partition: sum of s over members minus sum over the rest,
/// both taken in pooled index order.
fn partition_statistic<T: Scalar>(s: &[T], member: &[bool]) -> T {
    let inside = compensated_sum(s.iter().zip(member).filter(|(_, &m)| m).map(|(&v, _)| v));
    let outside = compensated_sum(s.iter().zip(member).filter(|(_, &m)| !m).map(|(&v, _)| v));
    inside - outside
}

fn identity_membership(n1: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| i < n1).collect()
}

/// `d = sum_{x in Z1} s(x) - sum_{y in Z2} s(y)`.
pub fn differential_association<T: Scalar>(
    z1: &ClassEmbeddings<T>,
    z2: &ClassEmbeddings<T>,
    zw: &ClassEmbeddings<T>,
    zm: &ClassEmbeddings<T>,
) -> Result<T, SimilarityError> {
    common_dim(&[z1, z2, zw, zm])?;
    let mut s = s_values(z1, zw, zm)?;
    s.extend(s_values(z2, zw, zm)?);
    Ok(partition_statistic(&s, &identity_membership(z1.rows(), s.len())))
}

fn standardized_difference<T: Scalar>(s: &[T], n1: usize) -> Result<T, AssociationError> {
    let (a, b) = s.split_at(n1);
    let pooled_mean = mean(s).expect("non-empty");
    let sd = sample_std(s, pooled_mean).ok_or(AssociationError::DegenerateVariance)?;
    let scale = s.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let floor = T::epsilon() * T::of_usize(64) * scale.max(T::min_positive_value());
    if !(sd > floor) {
        return Err(AssociationError::DegenerateVariance);
    }
    Ok((mean(a).expect("non-empty") - mean(b).expect("non-empty")) / sd)
}

/// Standardized mean difference of s between the target sets, divided by the
/// sample standard deviation of the pooled s-values.
pub fn effect_size<T: Scalar>(
    z1: &ClassEmbeddings<T>,
    z2: &ClassEmbeddings<T>,
    zw: &ClassEmbeddings<T>,
    zm: &ClassEmbeddings<T>,
) -> Result<T, AssociationError> {
    common_dim(&[z1, z2, zw, zm])?;
    let mut s = s_values(z1, zw, zm)?;
    s.extend(s_values(z2, zw, zm)?);
    standardized_difference(&s, z1.rows())
}

/// `C(n, r)`, saturating at `u64::MAX`.
pub fn binomial(n: u64, r: u64) -> u64 {
    let r = r.min(n - r.min(n));
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Advances `idx` to the next `r`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    let Some(i) = (0..r).rev().find(|&i| idx[i] < n - r + i) else {
        return false;
    };
    idx[i] += 1;
    for j in i + 1..r {
        idx[j] = idx[j - 1] + 1;
    }
    true
}

/// One-sided permutation test of `d`.
///
/// The rows of `Z1` and `Z2` are pooled and re-partitioned into groups of the
/// original sizes. With at most `n_perm` distinct partitions (and
/// [`PermutationMode::Auto`]) all of them are enumerated and `p` is the
/// fraction with `d* >= d`. Otherwise `n_perm` uniform partitions are drawn,
/// partition `i` from substream `(seed, i)`, and
/// `p = (1 + #{d* >= d}) / (1 + n_perm)`. Ties count as extreme.
pub fn permutation_test<T: Scalar>(
    z1: &ClassEmbeddings<T>,
    z2: &ClassEmbeddings<T>,
    zw: &ClassEmbeddings<T>,
    zm: &ClassEmbeddings<T>,
    cfg: PermutationConfig,
) -> Result<AssociationResult<T>, AssociationError> {
    if cfg.n_perm == 0 {
        return Err(AssociationError::ZeroPermutations);
    }
    common_dim(&[z1, z2, zw, zm])?;
    let n1 = z1.rows();
    let mut s = s_values(z1, zw, zm)?;
    s.extend(s_values(z2, zw, zm)?);
    let n = s.len();

    let observed = partition_statistic(&s, &identity_membership(n1, n));
    let effect = match standardized_difference(&s, n1) {
        Ok(e) => Some(e),
        Err(AssociationError::DegenerateVariance) => None,
        Err(e) => return Err(e),
    };
    let total_abs = compensated_sum(s.iter().map(|v| v.abs()));
    let threshold = observed - T::epsilon() * T::of_usize(8) * total_abs;

    let partitions = binomial(n as u64, n1 as u64);
    let exact = cfg.mode == PermutationMode::Auto && partitions <= cfg.n_perm;
    let (p_value, n_permutations) = if exact {
        let mut idx: Vec<usize> = (0..n1).collect();
        let mut member = vec![false; n];
        let mut extreme = 0u64;
        loop {
            member.iter_mut().for_each(|m| *m = false);
            idx.iter().for_each(|&i| member[i] = true);
            if partition_statistic(&s, &member) >= threshold {
                extreme += 1;
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
        (extreme as f64 / partitions as f64, partitions)
    } else {
        let extreme: u64 = (0..cfg.n_perm)
            .into_par_iter()
            .map_init(
                || (Vec::with_capacity(n), vec![false; n]),
                |(order, member), i| {
                    let mut rng = substream(cfg.seed, i);
                    order.clear();
                    order.extend(0..n);
                    order.shuffle(&mut rng);
                    member.iter_mut().for_each(|m| *m = false);
                    order[..n1].iter().for_each(|&j| member[j] = true);
                    u64::from(partition_statistic(&s, member) >= threshold)
                },
            )
            .sum();
        ((1 + extreme) as f64 / (1 + cfg.n_perm) as f64, cfg.n_perm)
    };

    Ok(AssociationResult {
        tuple_ids: [zw, zm, z1, z2].map(|z| z.class_id().to_string()),
        d: observed,
        effect_size: effect,
        p_value,
        n_permutations,
        exact,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cls(id: &str, rows: &[Vec<f64>]) -> ClassEmbeddings<f64> {
        ClassEmbeddings::from_rows(id, "s", rows).unwrap()
    }

    #[test]
    fn s_examples() {
        let w = cls("w", &[vec![1.0, 0.0]]);
        let m = cls("m", &[vec![0.0, 1.0]]);
        assert_eq!(association_s(&[0.3, 0.8], &w, &w).unwrap(), 0.0);
        assert_eq!(association_s(&[1.0, 0.0], &w, &m).unwrap(), 1.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(association_s(&[r, r], &w, &m).unwrap(), 0.0);
        assert!(association_s(&[1.0, 0.0, 0.0], &w, &m).is_err());
    }

    #[test]
    fn d_examples() {
        let w = cls("w", &[vec![1.0, 0.0]]);
        let m = cls("m", &[vec![0.0, 1.0]]);
        let z1 = cls("1", &[vec![1.0, 0.0]]);
        let z2 = cls("2", &[vec![0.0, 1.0]]);
        assert_eq!(differential_association(&z1, &z2, &w, &m).unwrap(), 2.0);
        assert_eq!(differential_association(&z2, &z1, &w, &m).unwrap(), -2.0);
        assert_eq!(differential_association(&z1, &z1, &w, &m).unwrap(), 0.0);
    }

    #[test]
    fn effect_size_two_plus_two() {
        let w = cls("w", &[vec![1.0, 0.0]]);
        let m = cls("m", &[vec![0.0, 1.0]]);
        // s(x) = (x0 - x1) / |x| for these attribute sets
        let z1 = cls("1", &[vec![3.0, 4.0], vec![1.0, 0.0]]);
        let z2 = cls("2", &[vec![0.0, 2.0], vec![5.0, 12.0]]);
        // s values: -0.2, 1.0 | -1.0, -7/13
        let s = [-0.2, 1.0, -1.0, -7.0 / 13.0];
        let mean_all = s.iter().sum::<f64>() / 4.0;
        let var = s.iter().map(|v| (v - mean_all).powi(2)).sum::<f64>() / 3.0;
        let want = ((s[0] + s[1]) / 2.0 - (s[2] + s[3]) / 2.0) / var.sqrt();
        let got = effect_size(&z1, &z2, &w, &m).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        let flipped = effect_size(&z1, &z2, &m, &w).unwrap();
        assert_eq!(flipped, -got);
        assert_eq!(effect_size(&z1, &z1, &w, &m).unwrap(), 0.0);
    }

    #[test]
    fn effect_size_degenerate() {
        let w = cls("w", &[vec![1.0, 0.0]]);
        let m = cls("m", &[vec![0.0, 1.0]]);
        let z = cls("1", &[vec![1.0, 1.0]]);
        assert_eq!(effect_size(&z, &z, &w, &m), Err(AssociationError::DegenerateVariance));
    }

    #[test]
    fn identical_singletons_give_p_one() {
        let w = cls("w", &[vec![1.0, 0.0]]);
        let m = cls("m", &[vec![0.0, 1.0]]);
        let z = cls("x", &[vec![0.4, 0.9]]);
        let r = permutation_test(&z, &z, &w, &m, PermutationConfig::default()).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.exact);
        assert_eq!(r.n_permutations, 2);
        assert_eq!(r.d, 0.0);
        assert_eq!(r.effect_size, None);
    }

    #[test]
    fn sampled_mode_is_deterministic() {
        let w = cls("w", &[vec![1.0, 0.1, 0.0], vec![0.8, 0.3, 0.1]]);
        let m = cls("m", &[vec![0.0, 1.0, 0.2], vec![0.1, 0.7, 0.5]]);
        let z1 = cls("1", &[vec![1.0, 0.2, 0.3], vec![0.6, 0.1, 0.9], vec![0.9, 0.5, 0.1]]);
        let z2 = cls("2", &[vec![0.1, 1.0, 0.3], vec![0.2, 0.6, 0.6], vec![0.5, 0.5, 0.5]]);
        let cfg = PermutationConfig { n_perm: 5_000, seed: 4, mode: PermutationMode::Sampled };
        let a = permutation_test(&z1, &z2, &w, &m, cfg).unwrap();
        let b = permutation_test(&z1, &z2, &w, &m, cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.exact);
        assert_eq!(a.n_permutations, 5_000);
        assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }

    #[test]
    fn zero_permutations_rejected() {
        let z = cls("x", &[vec![1.0]]);
        let cfg = PermutationConfig { n_perm: 0, ..Default::default() };
        assert_eq!(permutation_test(&z, &z, &z, &z, cfg), Err(AssociationError::ZeroPermutations));
    }

    #[test]
    fn combinations() {
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(200, 100), u64::MAX);
        let mut idx = vec![0, 1];
        let mut seen = vec![idx.clone()];
        while next_combination(&mut idx, 4) {
            seen.push(idx.clone());
        }
        assert_eq!(seen, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
    }
}
