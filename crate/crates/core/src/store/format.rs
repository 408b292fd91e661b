//! EMB1 binary format and the CSV fallback.
//!
//! Binary layout: `b"EMB1"`, `u32` LE row count `k`, `u32` LE dimension `d`,
//! then `k * d` little-endian binary32 values in row-major order. Nothing else.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::scalar::Scalar;

use super::{ClassEmbeddings, StoreError};

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const HEADER_LEN: usize = 12;

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads an embedding file; `.csv` selects the CSV fallback, anything else
/// is decoded as EMB1. The returned matrix carries empty class/snapshot ids,
/// set them with [`ClassEmbeddings::with_ids`].
pub fn read_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    expected_k: Option<usize>,
) -> Result<ClassEmbeddings<T>, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let emb = if is_csv(path) {
        decode_csv(&bytes)?
    } else {
        decode_emb1::<f32>(&bytes)?.cast()?
    };
    if let Some(k) = expected_k {
        if emb.rows() != k {
            return Err(StoreError::DimensionMismatch(format!(
                "{}: expected {k} rows, file has {}",
                path.display(),
                emb.rows()
            )));
        }
    }
    Ok(emb)
}

/// Writes `embeddings` to `path`. EMB1 stores binary32, so `f64` input is
/// rounded; a row that underflows to zero or a value that overflows is
/// reported before anything is written.
pub fn write_embeddings<T: Scalar>(
    embeddings: &ClassEmbeddings<T>,
    path: impl AsRef<Path>,
) -> Result<(), StoreError> {
    let path = path.as_ref();
    let bytes = if is_csv(path) {
        encode_csv(embeddings)
    } else {
        encode_emb1(&embeddings.cast::<f32>()?)
    };
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&bytes).map_err(io_err(path))?;
    file.flush().map_err(io_err(path))
}

pub fn encode_emb1(embeddings: &ClassEmbeddings<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * embeddings.as_slice().len());
    out.extend_from_slice(EMB1_MAGIC);
    out.extend_from_slice(&(embeddings.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(embeddings.dim() as u32).to_le_bytes());
    for v in embeddings.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_emb1<T: Scalar>(bytes: &[u8]) -> Result<ClassEmbeddings<T>, StoreError> {
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if &bytes[..4] != EMB1_MAGIC {
        return Err(StoreError::Format("bad magic, expected \"EMB1\"".into()));
    }
    let k = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = k
        .checked_mul(d)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| StoreError::Format(format!("header {k}x{d} overflows")))?;
    if payload.len() != expected {
        return Err(StoreError::Format(format!(
            "header declares {k}x{d} ({expected} payload bytes), found {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .map(|v| T::from(v).unwrap_or_else(T::nan))
        .collect();
    ClassEmbeddings::new("", "", k, d, data)
}

fn decode_csv<T: Scalar>(bytes: &[u8]) -> Result<ClassEmbeddings<T>, StoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| StoreError::Format(format!("csv line {}: {e}", i + 1)))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<T>()
                    .map_err(|_| StoreError::Format(format!("csv line {}: bad number '{field}'", i + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(StoreError::Format("csv file has no rows".into()));
    }
    ClassEmbeddings::from_rows("", "", &rows)
}

fn encode_csv<T: Scalar>(embeddings: &ClassEmbeddings<T>) -> Vec<u8> {
    let mut out = String::new();
    for row in embeddings.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out.into_bytes()
}
