//! Analysis-set manifest: classes, snapshots, and declared comparisons.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

use super::{read_embeddings, ClassEmbeddings, StoreError};

/// Snapshot role. Repeated finetuning trials are tagged `finetuned.<n>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Pretrained,
    Finetuned { trial: Option<u32> },
}

impl Role {
    pub fn is_finetuned(self) -> bool {
        matches!(self, Role::Finetuned { .. })
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Pretrained => f.write_str("pretrained"),
            Role::Finetuned { trial: None } => f.write_str("finetuned"),
            Role::Finetuned { trial: Some(t) } => write!(f, "finetuned.{t}"),
        }
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pretrained" => Ok(Role::Pretrained),
            "finetuned" => Ok(Role::Finetuned { trial: None }),
            _ => s
                .strip_prefix("finetuned.")
                .and_then(|t| t.parse().ok())
                .map(|trial| Role::Finetuned { trial: Some(trial) })
                .ok_or_else(|| format!("unknown snapshot role '{s}' (expected pretrained or finetuned)")),
        }
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub id: String,
    pub role: Role,
    /// Free-form metadata (model name, layer, training details); not interpreted.
    #[serde(default)]
    pub provenance: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: String,
    #[serde(default)]
    pub display_name: String,
    /// Number of embeddings `k`; must match the file header.
    pub count: usize,
    /// Embedding file per snapshot id, relative to the manifest directory.
    pub paths: BTreeMap<String, PathBuf>,
}

/// `(target, protected)` class pair whose inter-class similarity is profiled.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(String, String)", into = "(String, String)")]
pub struct PairDecl {
    pub target: String,
    pub protected: String,
}

impl From<(String, String)> for PairDecl {
    fn from((target, protected): (String, String)) -> Self {
        Self { target, protected }
    }
}

impl From<PairDecl> for (String, String) {
    fn from(p: PairDecl) -> Self {
        (p.target, p.protected)
    }
}

/// Association tuple `(c_w, c_m, c_1, c_2)`: attribute sets `w`, `m` and
/// target sets `1`, `2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(
    from = "(String, String, String, String)",
    into = "(String, String, String, String)"
)]
pub struct AssociationDecl {
    pub attr_w: String,
    pub attr_m: String,
    pub target_1: String,
    pub target_2: String,
}

impl AssociationDecl {
    pub fn ids(&self) -> [&str; 4] {
        [&self.attr_w, &self.attr_m, &self.target_1, &self.target_2]
    }
}

impl From<(String, String, String, String)> for AssociationDecl {
    fn from((attr_w, attr_m, target_1, target_2): (String, String, String, String)) -> Self {
        Self {
            attr_w,
            attr_m,
            target_1,
            target_2,
        }
    }
}

impl From<AssociationDecl> for (String, String, String, String) {
    fn from(a: AssociationDecl) -> Self {
        (a.attr_w, a.attr_m, a.target_1, a.target_2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSetManifest {
    pub name: String,
    pub classes: Vec<ClassEntry>,
    pub snapshots: Vec<SnapshotEntry>,
    #[serde(default)]
    pub pairs: Vec<PairDecl>,
    #[serde(default)]
    pub associations: Vec<AssociationDecl>,
    /// Directory relative embedding paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Reads and validates a manifest; relative paths resolve against its directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<AnalysisSetManifest, StoreError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    AnalysisSetManifest::from_json(&text, base)
}

impl AnalysisSetManifest {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let mut manifest: Self = serde_json::from_str(text).map_err(|e| match e.classify() {
            serde_json::error::Category::Data => StoreError::Schema(e.to_string()),
            _ => StoreError::Parse(e.to_string()),
        })?;
        manifest.base_dir = base_dir.into();
        for class in &mut manifest.classes {
            if class.display_name.is_empty() {
                class.display_name = class.id.clone();
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Checks every manifest invariant. The outcome does not depend on the
    /// order of `classes`.
    pub fn validate(&self) -> Result<(), StoreError> {
        let mut snapshot_ids = HashSet::new();
        let mut roles = HashSet::new();
        for snap in &self.snapshots {
            if snap.id.is_empty() {
                return Err(StoreError::Schema("snapshot id must be non-empty".into()));
            }
            if !snapshot_ids.insert(snap.id.as_str()) {
                return Err(StoreError::Schema(format!("duplicate snapshot id '{}'", snap.id)));
            }
            if !roles.insert(snap.role) {
                return Err(StoreError::Schema(format!("more than one snapshot with role '{}'", snap.role)));
            }
        }
        if roles.contains(&Role::Finetuned { trial: None })
            && roles.iter().any(|r| matches!(r, Role::Finetuned { trial: Some(_) }))
        {
            return Err(StoreError::Schema(
                "cannot mix role 'finetuned' with numbered 'finetuned.<n>' trials".into(),
            ));
        }

        let mut class_ids = HashSet::new();
        for class in &self.classes {
            if class.id.is_empty() {
                return Err(StoreError::Schema("class id must be non-empty".into()));
            }
            if !class_ids.insert(class.id.as_str()) {
                return Err(StoreError::Schema(format!("duplicate class id '{}'", class.id)));
            }
            if class.count < 2 {
                return Err(StoreError::Schema(format!(
                    "class '{}' has count {}, at least 2 embeddings are required",
                    class.id, class.count
                )));
            }
            if let Some(unknown) = class.paths.keys().find(|s| !snapshot_ids.contains(s.as_str())) {
                return Err(StoreError::Reference {
                    kind: "snapshot",
                    id: unknown.clone(),
                });
            }
            if let Some(missing) = self.snapshots.iter().find(|s| !class.paths.contains_key(&s.id)) {
                return Err(StoreError::Schema(format!(
                    "class '{}' has no embedding path for snapshot '{}'",
                    class.id, missing.id
                )));
            }
        }

        let referenced = self
            .pairs
            .iter()
            .flat_map(|p| [p.target.as_str(), p.protected.as_str()])
            .chain(self.associations.iter().flat_map(|a| a.ids()));
        for id in referenced {
            if !class_ids.contains(id) {
                return Err(StoreError::Reference {
                    kind: "class",
                    id: id.to_string(),
                });
            }
        }
        Ok(())
    }

    pub fn class(&self, id: &str) -> Option<&ClassEntry> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn snapshot(&self, id: &str) -> Option<&SnapshotEntry> {
        self.snapshots.iter().find(|s| s.id == id)
    }

    pub fn pretrained(&self) -> Option<&SnapshotEntry> {
        self.snapshots.iter().find(|s| s.role == Role::Pretrained)
    }

    /// Finetuned snapshots ordered by trial number.
    pub fn finetuned(&self) -> Vec<&SnapshotEntry> {
        let mut out: Vec<_> = self.snapshots.iter().filter(|s| s.role.is_finetuned()).collect();
        out.sort_by_key(|s| s.role);
        out
    }

    pub fn embedding_path(&self, class_id: &str, snapshot_id: &str) -> Result<PathBuf, StoreError> {
        let class = self.class(class_id).ok_or_else(|| StoreError::Reference {
            kind: "class",
            id: class_id.to_string(),
        })?;
        let rel = class.paths.get(snapshot_id).ok_or_else(|| StoreError::Reference {
            kind: "snapshot",
            id: snapshot_id.to_string(),
        })?;
        Ok(self.base_dir.join(rel))
    }

    /// Loads one class of one snapshot, checking `k` against the manifest.
    pub fn load_class<T: Scalar>(&self, class_id: &str, snapshot_id: &str) -> Result<ClassEmbeddings<T>, StoreError> {
        let path = self.embedding_path(class_id, snapshot_id)?;
        let count = self.class(class_id).map(|c| c.count);
        Ok(read_embeddings::<T>(&path, count)?.with_ids(class_id, snapshot_id))
    }

    /// Loads every class of a snapshot and checks they share one dimension.
    pub fn load_snapshot<T: Scalar>(
        &self,
        snapshot_id: &str,
    ) -> Result<HashMap<String, ClassEmbeddings<T>>, StoreError> {
        if self.snapshot(snapshot_id).is_none() {
            return Err(StoreError::Reference {
                kind: "snapshot",
                id: snapshot_id.to_string(),
            });
        }
        let mut out = HashMap::with_capacity(self.classes.len());
        let mut dim: Option<(usize, &str)> = None;
        for class in &self.classes {
            let emb = self.load_class::<T>(&class.id, snapshot_id)?;
            match dim {
                Some((d, first)) if d != emb.dim() => {
                    return Err(StoreError::DimensionMismatch(format!(
                        "snapshot '{snapshot_id}': class '{}' has d={}, class '{first}' has d={d}",
                        class.id,
                        emb.dim()
                    )));
                }
                None => dim = Some((emb.dim(), &class.id)),
                _ => {}
            }
            out.insert(class.id.clone(), emb);
        }
        Ok(out)
    }
}
