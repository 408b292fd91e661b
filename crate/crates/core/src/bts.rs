//! Bias Transfer Score: Spearman rank correlation between a snapshot pair's
//! similarity profiles, with an exact or t-approximated p-value.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::scalar::{mean, population_std, Scalar};
use crate::similarity::{EstimateKind, SimilarityEstimate};
use crate::store::AnalysisSetManifest;

/// Profiles up to this many entries get an exact permutation p-value.
pub const EXACT_MAX_ENTRIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BtsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input is constant, rank correlation undefined")]
    ConstantInput,
    #[error("profiles have different keys")]
    KeyMismatch,
    #[error("{0} entries, at least {1} required")]
    TooFewEntries(usize, usize),
    #[error("missing {kind} estimate for {key} in snapshot '{snapshot}'")]
    MissingEstimate { kind: &'static str, key: String, snapshot: String },
    #[error("duplicate profile key {0}")]
    DuplicateKey(String),
    #[error("manifest has no {0} snapshot")]
    MissingSnapshot(&'static str),
    #[error("cannot average zero profiles")]
    NoProfiles,
}

/// A class id, or an unordered class pair stored in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileKey {
    Class(String),
    Pair(String, String),
}

impl ProfileKey {
    pub fn pair(a: &str, b: &str) -> Self {
        if a <= b {
            ProfileKey::Pair(a.to_string(), b.to_string())
        } else {
            ProfileKey::Pair(b.to_string(), a.to_string())
        }
    }
}

impl fmt::Display for ProfileKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileKey::Class(c) => f.write_str(c),
            ProfileKey::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// Mean similarities of one snapshot, keyed and sorted by [`ProfileKey`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityProfile<T> {
    pub snapshot_id: String,
    pub kind: EstimateKind,
    pub entries: Vec<(ProfileKey, T)>,
}

impl<T: Scalar> SimilarityProfile<T> {
    /// Sorts the entries by key and rejects duplicates.
    pub fn new(
        snapshot_id: impl Into<String>,
        kind: EstimateKind,
        entries: impl IntoIterator<Item = (ProfileKey, T)>,
    ) -> Result<Self, BtsError> {
        let mut map = BTreeMap::new();
        for (key, value) in entries {
            if map.contains_key(&key) {
                return Err(BtsError::DuplicateKey(key.to_string()));
            }
            map.insert(key, value);
        }
        Ok(Self {
            snapshot_id: snapshot_id.into(),
            kind,
            entries: map.into_iter().collect(),
        })
    }

    pub fn keys(&self) -> impl Iterator<Item = &ProfileKey> {
        self.entries.iter().map(|(k, _)| k)
    }

    pub fn values(&self) -> Vec<T> {
        self.entries.iter().map(|&(_, v)| v).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn comparable(&self, other: &Self) -> bool {
        self.kind == other.kind && self.keys().eq(other.keys())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sidedness {
    #[default]
    TwoSided,
    /// Alternative: positive rank correlation.
    Greater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BtsMethod {
    ExactPermutation,
    TApproximation,
}

impl fmt::Display for BtsMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BtsMethod::ExactPermutation => "exact-permutation",
            BtsMethod::TApproximation => "t-approximation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BtsResult<T> {
    pub r_bts: T,
    pub p_value: f64,
    pub n: usize,
    pub method: BtsMethod,
    pub sidedness: Sidedness,
}

/// Ranks starting at 1, ties receive the average of their positions.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end, averaged
        let avg = T::of_usize(start + 1 + end) / T::of_usize(2);
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

struct RankMoments<T> {
    centered_cross: T,
    ss_x: T,
    ss_y: T,
}

fn rank_moments<T: Scalar>(rx: &[T], ry: &[T]) -> RankMoments<T> {
    let mx = mean(rx).expect("non-empty");
    let my = mean(ry).expect("non-empty");
    let mut m = RankMoments {
        centered_cross: T::zero(),
        ss_x: T::zero(),
        ss_y: T::zero(),
    };
    for (&a, &b) in rx.iter().zip(ry) {
        m.centered_cross = m.centered_cross + (a - mx) * (b - my);
        m.ss_x = m.ss_x + (a - mx) * (a - mx);
        m.ss_y = m.ss_y + (b - my) * (b - my);
    }
    m
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman<T: Scalar>(x: &[T], y: &[T]) -> Result<T, BtsError> {
    if x.len() != y.len() {
        return Err(BtsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(BtsError::TooFewEntries(x.len(), 2));
    }
    let m = rank_moments(&average_ranks(x), &average_ranks(y));
    if m.ss_x.is_zero() || m.ss_y.is_zero() {
        return Err(BtsError::ConstantInput);
    }
    let r = m.centered_cross / (m.ss_x * m.ss_y).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Exact permutation p-value of Spearman's rho, conditional on the observed
/// ties: every one of the `n!` reorderings of the `y` ranks is equally likely.
///
/// Ranks are half-integers, so every centered cross-product sum is exactly
/// representable and tie detection needs no tolerance.
pub fn exact_spearman_p<T: Scalar>(x: &[T], y: &[T], sidedness: Sidedness) -> Result<f64, BtsError> {
    if x.len() != y.len() {
        return Err(BtsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    // twice the ranks: integers
    let rx: Vec<i64> = average_ranks(x).iter().map(|r| (r.as_f64() * 2.0) as i64).collect();
    let mut ry: Vec<i64> = average_ranks(y).iter().map(|r| (r.as_f64() * 2.0) as i64).collect();
    let sum_x: i64 = rx.iter().sum();
    let sum_y: i64 = ry.iter().sum();
    let n_i = n as i64;
    // n * sum(rx_i * ry_i) - sum_x * sum_y is proportional to rho
    let stat = |s: i64| n_i * s - sum_x * sum_y;
    let mut cross: i64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let observed = stat(cross);
    let is_extreme = |v: i64| match sidedness {
        Sidedness::TwoSided => v.abs() >= observed.abs(),
        Sidedness::Greater => v >= observed,
    };

    // Heap's algorithm, updating the cross sum per swap
    let mut extreme = u64::from(is_extreme(observed));
    let mut total = 1u64;
    let mut c = vec![0usize; n];
    let mut i = 1;
    while i < n {
        if c[i] < i {
            let j = if i % 2 == 0 { 0 } else { c[i] };
            cross += (rx[i] - rx[j]) * (ry[j] - ry[i]);
            ry.swap(i, j);
            total += 1;
            extreme += u64::from(is_extreme(stat(cross)));
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(extreme as f64 / total as f64)
}

/// p-value of `r` from `t = r * sqrt((n - 2) / (1 - r^2))` against Student's
/// t with `n - 2` degrees of freedom. Floored at the smallest positive `f64`.
pub fn t_approx_p(r: f64, n: usize, sidedness: Sidedness) -> Result<f64, BtsError> {
    if n < 3 {
        return Err(BtsError::TooFewEntries(n, 3));
    }
    let df = (n - 2) as f64;
    let t = if r.abs() >= 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = match sidedness {
        Sidedness::TwoSided => 2.0 * dist.sf(t.abs()),
        Sidedness::Greater => dist.sf(t),
    };
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Two-sided Bias Transfer Score.
pub fn bts<T: Scalar>(pre: &SimilarityProfile<T>, post: &SimilarityProfile<T>) -> Result<BtsResult<T>, BtsError> {
    bts_with(pre, post, Sidedness::TwoSided)
}

/// Spearman correlation of two comparable profiles. Profiles with at most
/// [`EXACT_MAX_ENTRIES`] entries use the exact permutation null, larger ones
/// the t approximation.
pub fn bts_with<T: Scalar>(
    pre: &SimilarityProfile<T>,
    post: &SimilarityProfile<T>,
    sidedness: Sidedness,
) -> Result<BtsResult<T>, BtsError> {
    if !pre.comparable(post) {
        return Err(BtsError::KeyMismatch);
    }
    let n = pre.len();
    if n < 3 {
        return Err(BtsError::TooFewEntries(n, 3));
    }
    let (x, y) = (pre.values(), post.values());
    let r = spearman(&x, &y)?;
    let (p_value, method) = if n <= EXACT_MAX_ENTRIES {
        (exact_spearman_p(&x, &y, sidedness)?, BtsMethod::ExactPermutation)
    } else {
        (t_approx_p(r.as_f64(), n, sidedness)?, BtsMethod::TApproximation)
    };
    Ok(BtsResult {
        r_bts: r,
        p_value,
        n,
        method,
        sidedness,
    })
}

fn estimate_key<T>(e: &SimilarityEstimate<T>) -> Option<ProfileKey> {
    match (e.kind, e.class_ids.as_slice()) {
        (EstimateKind::Intra, [c]) => Some(ProfileKey::Class(c.clone())),
        (EstimateKind::Inter, [p, q]) => Some(ProfileKey::pair(p, q)),
        _ => None,
    }
}

/// Profile of one snapshot: every manifest class (intra) or every declared
/// pair (inter), looked up among `estimates`.
pub fn snapshot_profile<T: Scalar>(
    manifest: &AnalysisSetManifest,
    estimates: &[SimilarityEstimate<T>],
    snapshot_id: &str,
    kind: EstimateKind,
) -> Result<SimilarityProfile<T>, BtsError> {
    let wanted: Vec<ProfileKey> = match kind {
        EstimateKind::Intra => manifest.classes.iter().map(|c| ProfileKey::Class(c.id.clone())).collect(),
        EstimateKind::Inter => manifest.pairs.iter().map(|p| ProfileKey::pair(&p.target, &p.protected)).collect(),
    };
    let mut seen = BTreeSet::new();
    for key in &wanted {
        if !seen.insert(key) {
            return Err(BtsError::DuplicateKey(key.to_string()));
        }
    }

    let mut available: BTreeMap<ProfileKey, T> = BTreeMap::new();
    for e in estimates.iter().filter(|e| e.kind == kind && e.snapshot_id == snapshot_id) {
        let Some(key) = estimate_key(e) else { continue };
        if available.insert(key.clone(), e.mean).is_some() {
            return Err(BtsError::DuplicateKey(key.to_string()));
        }
    }

    let entries = wanted
        .into_iter()
        .map(|key| match available.get(&key) {
            Some(&v) => Ok((key, v)),
            None => Err(BtsError::MissingEstimate {
                kind: match kind {
                    EstimateKind::Intra => "intra",
                    EstimateKind::Inter => "inter",
                },
                key: key.to_string(),
                snapshot: snapshot_id.to_string(),
            }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    SimilarityProfile::new(snapshot_id, kind, entries)
}

/// Pre/post profiles for both similarity kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePairs<T> {
    pub intra: (SimilarityProfile<T>, SimilarityProfile<T>),
    pub inter: (SimilarityProfile<T>, SimilarityProfile<T>),
}

/// Profiles for the manifest's pretrained and (single) finetuned snapshot.
pub fn build_profiles<T: Scalar>(
    manifest: &AnalysisSetManifest,
    estimates: &[SimilarityEstimate<T>],
) -> Result<ProfilePairs<T>, BtsError> {
    let pre = manifest.pretrained().ok_or(BtsError::MissingSnapshot("pretrained"))?;
    let post = *manifest.finetuned().first().ok_or(BtsError::MissingSnapshot("finetuned"))?;
    let profile = |snap: &str, kind| snapshot_profile(manifest, estimates, snap, kind);
    Ok(ProfilePairs {
        intra: (profile(&pre.id, EstimateKind::Intra)?, profile(&post.id, EstimateKind::Intra)?),
        inter: (profile(&pre.id, EstimateKind::Inter)?, profile(&post.id, EstimateKind::Inter)?),
    })
}

/// Per-entry mean and population standard deviation across comparable
/// profiles (e.g. repeated finetuning trials).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpread<T> {
    pub kind: EstimateKind,
    pub snapshot_ids: Vec<String>,
    pub entries: Vec<(ProfileKey, T, T)>,
}

impl<T: Scalar> ProfileSpread<T> {
    pub fn mean_profile(&self, snapshot_id: impl Into<String>) -> SimilarityProfile<T> {
        SimilarityProfile {
            snapshot_id: snapshot_id.into(),
            kind: self.kind,
            entries: self.entries.iter().map(|(k, m, _)| (k.clone(), *m)).collect(),
        }
    }
}

pub fn profile_spread<T: Scalar>(profiles: &[SimilarityProfile<T>]) -> Result<ProfileSpread<T>, BtsError> {
    let first = profiles.first().ok_or(BtsError::NoProfiles)?;
    if profiles.iter().any(|p| !first.comparable(p)) {
        return Err(BtsError::KeyMismatch);
    }
    let entries = first
        .entries
        .iter()
        .enumerate()
        .map(|(i, (key, _))| {
            let vals: Vec<T> = profiles.iter().map(|p| p.entries[i].1).collect();
            let mu = mean(&vals).expect("non-empty");
            (key.clone(), mu, population_std(&vals, mu))
        })
        .collect();
    Ok(ProfileSpread {
        kind: first.kind,
        snapshot_ids: profiles.iter().map(|p| p.snapshot_id.clone()).collect(),
        entries,
    })
}
