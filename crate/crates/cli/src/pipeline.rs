//! Orchestration shared by the subcommands: load snapshots, estimate
//! similarity profiles, run association tests and score bias transfer.

use std::collections::{BTreeMap, HashMap};

use embias_core::bts::{profile_spread, snapshot_profile, ProfileSpread};
use embias_core::store::{AnalysisSetManifest, Role, SnapshotEntry};
use embias_core::{
    bts_with, inter_class_similarity, intra_class_similarity, permutation_test, AssociationResult,
    BtsError, ClassEmbeddings, EstimateKind, PermutationConfig, SamplingConfig, Sidedness,
    SimilarityEstimate,
};
use serde::Serialize;

use crate::error::CliError;
use crate::output::BtsRow;

pub type Snapshot = HashMap<String, ClassEmbeddings<f64>>;

pub fn load_snapshot(manifest: &AnalysisSetManifest, snapshot_id: &str) -> Result<Snapshot, CliError> {
    if manifest.snapshot(snapshot_id).is_none() {
        return Err(CliError::Input(format!("unknown snapshot id '{snapshot_id}'")));
    }
    Ok(manifest.load_snapshot::<f64>(snapshot_id)?)
}

/// One estimate per manifest class, in manifest order.
pub fn intra_estimates(
    manifest: &AnalysisSetManifest,
    snapshot: &Snapshot,
    cfg: SamplingConfig,
) -> Result<Vec<SimilarityEstimate<f64>>, CliError> {
    manifest
        .classes
        .iter()
        .map(|c| Ok(intra_class_similarity(&snapshot[&c.id], cfg)?))
        .collect()
}

/// One estimate per declared `(target, protected)` pair, in manifest order.
pub fn inter_estimates(
    manifest: &AnalysisSetManifest,
    snapshot: &Snapshot,
    cfg: SamplingConfig,
) -> Result<Vec<SimilarityEstimate<f64>>, CliError> {
    manifest
        .pairs
        .iter()
        .map(|p| Ok(inter_class_similarity(&snapshot[&p.target], &snapshot[&p.protected], cfg)?))
        .collect()
}

pub fn association_results(
    manifest: &AnalysisSetManifest,
    snapshot: &Snapshot,
    cfg: PermutationConfig,
) -> Result<Vec<AssociationResult<f64>>, CliError> {
    manifest
        .associations
        .iter()
        .map(|a| {
            let [w, m, c1, c2] = a.ids().map(|id| &snapshot[id]);
            Ok(permutation_test(c1, c2, w, m, cfg)?)
        })
        .collect()
}

pub struct SnapshotRoles<'a> {
    pub pretrained: &'a SnapshotEntry,
    pub finetuned: Vec<&'a SnapshotEntry>,
}

pub fn snapshot_roles(manifest: &AnalysisSetManifest) -> Result<SnapshotRoles<'_>, CliError> {
    let pretrained = manifest
        .pretrained()
        .ok_or_else(|| CliError::Input("manifest declares no pretrained snapshot".into()))?;
    let finetuned = manifest.finetuned();
    if finetuned.is_empty() {
        return Err(CliError::Input("manifest declares no finetuned snapshot".into()));
    }
    Ok(SnapshotRoles { pretrained, finetuned })
}

/// Estimates for every snapshot, keyed by snapshot id.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Estimates {
    pub intra: BTreeMap<String, Vec<SimilarityEstimate<f64>>>,
    pub inter: BTreeMap<String, Vec<SimilarityEstimate<f64>>>,
}

impl Estimates {
    fn all(&self) -> Vec<SimilarityEstimate<f64>> {
        self.intra.values().chain(self.inter.values()).flatten().cloned().collect()
    }
}

pub fn estimate_snapshots(
    manifest: &AnalysisSetManifest,
    snapshot_ids: &[&str],
    cfg: SamplingConfig,
) -> Result<Estimates, CliError> {
    let mut out = Estimates::default();
    for &id in snapshot_ids {
        let snap = load_snapshot(manifest, id)?;
        out.intra.insert(id.to_string(), intra_estimates(manifest, &snap, cfg)?);
        out.inter.insert(id.to_string(), inter_estimates(manifest, &snap, cfg)?);
    }
    Ok(out)
}

fn kind_name(kind: EstimateKind) -> &'static str {
    match kind {
        EstimateKind::Intra => "intra",
        EstimateKind::Inter => "inter",
    }
}

/// Bias-transfer scores of the pretrained snapshot against the finetuned one.
///
/// With several finetuning trials the headline rows compare against the
/// per-entry trial mean (`finetuned` column `mean`), followed by one row per
/// trial. Scores that cannot be computed are returned as `None` together
/// with the reason.
pub struct BtsOutcome {
    pub rows: Vec<BtsRow>,
    pub spread: Vec<ProfileSpread<f64>>,
    pub failures: Vec<String>,
}

pub fn bias_transfer(
    manifest: &AnalysisSetManifest,
    estimates: &Estimates,
    sidedness: Sidedness,
) -> Result<BtsOutcome, CliError> {
    let roles = snapshot_roles(manifest)?;
    let all = estimates.all();
    let mut outcome = BtsOutcome {
        rows: Vec::new(),
        spread: Vec::new(),
        failures: Vec::new(),
    };
    let mut per_trial = Vec::new();
    for kind in [EstimateKind::Intra, EstimateKind::Inter] {
        let pre = snapshot_profile(manifest, &all, &roles.pretrained.id, kind)?;
        let posts = roles
            .finetuned
            .iter()
            .map(|s| snapshot_profile(manifest, &all, &s.id, kind))
            .collect::<Result<Vec<_>, BtsError>>()?;
        let mut push = |rows: &mut Vec<BtsRow>, label: String, post| {
            let result = match bts_with(&pre, post, sidedness) {
                Ok(r) => Some(r),
                Err(e) => {
                    outcome
                        .failures
                        .push(format!("{} BTS against '{label}': {e}", kind_name(kind)));
                    None
                }
            };
            rows.push(BtsRow {
                kind: kind_name(kind).to_string(),
                pretrained: roles.pretrained.id.clone(),
                finetuned: label,
                result,
            });
        };
        if posts.len() == 1 {
            push(&mut outcome.rows, roles.finetuned[0].id.clone(), &posts[0]);
        } else {
            let spread = profile_spread(&posts)?;
            let mean_profile = spread.mean_profile("mean");
            push(&mut outcome.rows, "mean".to_string(), &mean_profile);
            for (snap, post) in roles.finetuned.iter().zip(&posts) {
                push(&mut per_trial, snap.id.clone(), post);
            }
            outcome.spread.push(spread);
        }
    }
    outcome.rows.extend(per_trial);
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub m: usize,
    pub n_perm: u64,
    pub seed: u64,
    pub sidedness: Sidedness,
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotEcho {
    pub id: String,
    pub role: Role,
}

#[derive(Debug, Clone, Serialize)]
pub struct BtsSummary {
    pub intra: Option<embias_core::BtsResult<f64>>,
    pub inter: Option<embias_core::BtsResult<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub manifest_name: String,
    pub tool_version: String,
    pub timestamp: String,
    pub config: ConfigEcho,
    pub snapshots: Vec<SnapshotEcho>,
    pub intra_profiles: BTreeMap<String, Vec<SimilarityEstimate<f64>>>,
    pub inter_profiles: BTreeMap<String, Vec<SimilarityEstimate<f64>>>,
    /// Pretrained vs finetuned (or vs the trial mean when there are several trials).
    pub bts: BtsSummary,
    /// Every computed BTS row, including per-trial rows.
    pub bts_rows: Vec<BtsRow>,
    /// Across-trial mean and std per profile entry; empty with a single trial.
    pub trial_spread: Vec<ProfileSpread<f64>>,
    pub associations: BTreeMap<String, Vec<AssociationResult<f64>>>,
    pub warnings: Vec<String>,
}

pub struct ReportConfig {
    pub sampling: SamplingConfig,
    pub permutation: PermutationConfig,
    pub sidedness: Sidedness,
    pub timestamp: String,
}

pub fn run_report(manifest: &AnalysisSetManifest, cfg: &ReportConfig) -> Result<RunReport, CliError> {
    let roles = snapshot_roles(manifest)?;
    let ids: Vec<&str> = std::iter::once(roles.pretrained.id.as_str())
        .chain(roles.finetuned.iter().map(|s| s.id.as_str()))
        .collect();
    let estimates = estimate_snapshots(manifest, &ids, cfg.sampling)?;
    let mut associations = BTreeMap::new();
    for &id in &ids {
        let snap = load_snapshot(manifest, id)?;
        associations.insert(id.to_string(), association_results(manifest, &snap, cfg.permutation)?);
    }
    let outcome = bias_transfer(manifest, &estimates, cfg.sidedness)?;
    let headline = |kind: &str| {
        outcome
            .rows
            .iter()
            .find(|r| r.kind == kind)
            .and_then(|r| r.result)
    };
    let mut warnings = outcome.failures.clone();
    if manifest.pairs.is_empty() {
        warnings.push("manifest declares no pairs; inter-class profiles are empty".into());
    }
    Ok(RunReport {
        manifest_name: manifest.name.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: cfg.timestamp.clone(),
        config: ConfigEcho {
            m: cfg.sampling.m,
            n_perm: cfg.permutation.n_perm,
            seed: cfg.sampling.seed,
            sidedness: cfg.sidedness,
        },
        snapshots: ids
            .iter()
            .map(|id| SnapshotEcho {
                id: id.to_string(),
                role: manifest.snapshot(id).expect("listed").role,
            })
            .collect(),
        bts: BtsSummary {
            intra: headline("intra"),
            inter: headline("inter"),
        },
        bts_rows: outcome.rows,
        trial_spread: outcome.spread,
        intra_profiles: estimates.intra,
        inter_profiles: estimates.inter,
        associations,
        warnings,
    })
}
