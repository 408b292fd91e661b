//! CSV and JSON emission.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use embias_core::bts::BtsResult;
use embias_core::{AssociationResult, SimilarityEstimate};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    /// Explicit choice, else `.json` output paths get JSON and everything else CSV.
    pub fn resolve(explicit: Option<Format>, out: &Path) -> Format {
        explicit.unwrap_or_else(|| match out.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            _ => Format::Csv,
        })
    }
}

/// Fixed 9-significant-digit rendering used in every CSV cell.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..9).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, x)
    } else {
        sci
    }
}

/// Writes bytes to `out`, or stdout when `out` is `-`.
pub fn emit(out: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if out == Path::new("-") {
        let mut stdout = io::stdout().lock();
        return stdout
            .write_all(bytes)
            .and_then(|_| stdout.flush())
            .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}")));
    }
    fs::write(out, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", out.display())))
}

pub fn to_json<S: Serialize>(value: &S) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("report types serialize");
    v.push(b'\n');
    v
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn with_snapshot(snapshot: Option<&str>, header: &[&'static str]) -> Vec<&'static str> {
    snapshot.map(|_| "snapshot").into_iter().chain(header.iter().copied()).collect()
}

fn prefixed(snapshot: Option<&str>, row: Vec<String>) -> Vec<String> {
    snapshot.map(str::to_string).into_iter().chain(row).collect()
}

/// Rows of `(snapshot, estimates)`; the snapshot column is present when
/// `with_snapshot_column` is set.
pub fn intra_csv(groups: &[(&str, &[SimilarityEstimate<f64>])], with_snapshot_column: bool) -> Vec<u8> {
    let header = with_snapshot(with_snapshot_column.then_some(""), &["class", "mean", "std", "m", "seed"]);
    let rows = groups.iter().flat_map(|(snap, ests)| {
        ests.iter().map(move |e| {
            prefixed(
                with_snapshot_column.then_some(*snap),
                vec![e.class_ids[0].clone(), sig9(e.mean), sig9(e.std_dev), e.m.to_string(), e.seed.to_string()],
            )
        })
    });
    csv_bytes(&header, rows)
}

pub fn inter_csv(groups: &[(&str, &[SimilarityEstimate<f64>])], with_snapshot_column: bool) -> Vec<u8> {
    let header = with_snapshot(
        with_snapshot_column.then_some(""),
        &["class_p", "class_q", "mean", "std", "m", "seed"],
    );
    let rows = groups.iter().flat_map(|(snap, ests)| {
        ests.iter().map(move |e| {
            prefixed(
                with_snapshot_column.then_some(*snap),
                vec![
                    e.class_ids[0].clone(),
                    e.class_ids[1].clone(),
                    sig9(e.mean),
                    sig9(e.std_dev),
                    e.m.to_string(),
                    e.seed.to_string(),
                ],
            )
        })
    });
    csv_bytes(&header, rows)
}

pub fn ieat_csv(groups: &[(&str, &[AssociationResult<f64>])], with_snapshot_column: bool) -> Vec<u8> {
    let header = with_snapshot(
        with_snapshot_column.then_some(""),
        &["c_w", "c_m", "c_1", "c_2", "d", "effect_size", "p", "n_permutations", "exact"],
    );
    let rows = groups.iter().flat_map(|(snap, results)| {
        results.iter().map(move |r| {
            let mut row: Vec<String> = r.tuple_ids.to_vec();
            row.extend([
                sig9(r.d),
                r.effect_size.map(sig9).unwrap_or_default(),
                sig9(r.p_value),
                r.n_permutations.to_string(),
                r.exact.to_string(),
            ]);
            prefixed(with_snapshot_column.then_some(*snap), row)
        })
    });
    csv_bytes(&header, rows)
}

/// One BTS summary row.
#[derive(Debug, Clone, Serialize)]
pub struct BtsRow {
    pub kind: String,
    pub pretrained: String,
    pub finetuned: String,
    pub result: Option<BtsResult<f64>>,
}

pub fn bts_csv(rows: &[BtsRow]) -> Vec<u8> {
    let header = ["kind", "r_bts", "p", "n", "method", "pretrained", "finetuned"];
    let body = rows.iter().map(|r| match &r.result {
        Some(b) => vec![
            r.kind.clone(),
            sig9(b.r_bts),
            sig9(b.p_value),
            b.n.to_string(),
            b.method.to_string(),
            r.pretrained.clone(),
            r.finetuned.clone(),
        ],
        None => vec![
            r.kind.clone(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            r.pretrained.clone(),
            r.finetuned.clone(),
        ],
    });
    csv_bytes(&header, body)
}
