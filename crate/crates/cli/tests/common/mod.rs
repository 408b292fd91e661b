#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use embias_core::{write_embeddings, ClassEmbeddings};

pub struct ClassSpec {
    pub id: String,
    /// One matrix per snapshot, in the order snapshots were declared.
    pub per_snapshot: Vec<Vec<Vec<f32>>>,
}

impl ClassSpec {
    pub fn new(id: &str, per_snapshot: Vec<Vec<Vec<f32>>>) -> Self {
        Self {
            id: id.to_string(),
            per_snapshot,
        }
    }

    /// Same matrix for every snapshot.
    pub fn same(id: &str, rows: Vec<Vec<f32>>, n_snapshots: usize) -> Self {
        Self::new(id, vec![rows; n_snapshots])
    }
}

/// Writes EMB1 files plus `manifest.json` under `dir`; returns the manifest path.
pub fn write_fixture(
    dir: &Path,
    name: &str,
    snapshots: &[(&str, &str)],
    classes: &[ClassSpec],
    pairs: &[(&str, &str)],
    associations: &[[&str; 4]],
) -> PathBuf {
    let mut class_json = Vec::new();
    for class in classes {
        let mut paths = serde_json::Map::new();
        let mut count = 0;
        for ((snap, _), rows) in snapshots.iter().zip(&class.per_snapshot) {
            let file = format!("{snap}__{}.emb", class.id.replace('+', "_"));
            let emb = ClassEmbeddings::from_rows(class.id.as_str(), *snap, rows).unwrap();
            write_embeddings(&emb, dir.join(&file)).unwrap();
            paths.insert(snap.to_string(), file.into());
            count = rows.len();
        }
        class_json.push(serde_json::json!({
            "id": class.id,
            "display_name": class.id,
            "count": count,
            "paths": paths,
        }));
    }
    let manifest = serde_json::json!({
        "name": name,
        "classes": class_json,
        "snapshots": snapshots
            .iter()
            .map(|(id, role)| serde_json::json!({"id": id, "role": role, "provenance": {"model": "synthetic"}}))
            .collect::<Vec<_>>(),
        "pairs": pairs,
        "associations": associations,
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    path
}

pub fn embias(args: &[&str]) -> Output {
    embias_env(args, &[])
}

pub fn embias_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_embias"));
    cmd.args(args);
    cmd.env_remove("SOURCE_DATE_EPOCH");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses CSV text into header and rows.
pub fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `k` rows of `center + sigma * N(0, I)`.
pub fn cluster(rng: &mut impl rand::Rng, center: &[f32], sigma: f32, k: usize) -> Vec<Vec<f32>> {
    use rand_distr::{Distribution, Normal};
    let normal = Normal::new(0.0f32, 1.0).unwrap();
    (0..k)
        .map(|_| center.iter().map(|&c| c + sigma * normal.sample(rng)).collect())
        .collect()
}

pub fn basis(d: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; d];
    v[i] = 1.0;
    v
}
