use crate::scalar::Scalar;

use super::StoreError;

/// A `k x d` row-major matrix of embeddings for one class of one snapshot.
///
/// Construction validates that every entry is finite, no row is all zeros
/// and `k, d >= 1`. Rows are stored raw; similarity code normalizes on the fly.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings<T> {
    class_id: String,
    snapshot_id: String,
    rows: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> ClassEmbeddings<T> {
    pub fn new(
        class_id: impl Into<String>,
        snapshot_id: impl Into<String>,
        rows: usize,
        dim: usize,
        data: Vec<T>,
    ) -> Result<Self, StoreError> {
        if rows == 0 || dim == 0 {
            return Err(StoreError::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{dim}"
            )));
        }
        if data.len() != rows * dim {
            return Err(StoreError::DimensionMismatch(format!(
                "{rows}x{dim} matrix needs {} values, got {}",
                rows * dim,
                data.len()
            )));
        }
        for (row, chunk) in data.chunks_exact(dim).enumerate() {
            if let Some(col) = chunk.iter().position(|v| !v.is_finite()) {
                return Err(StoreError::NonFiniteValue { row, col });
            }
            if chunk.iter().all(|v| v.is_zero()) {
                return Err(StoreError::ZeroVector { row });
            }
        }
        Ok(Self {
            class_id: class_id.into(),
            snapshot_id: snapshot_id.into(),
            rows,
            dim,
            data,
        })
    }

    /// Builds a matrix from a list of rows, which must all share one length.
    pub fn from_rows(
        class_id: impl Into<String>,
        snapshot_id: impl Into<String>,
        rows: &[Vec<T>],
    ) -> Result<Self, StoreError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(StoreError::DimensionMismatch(format!(
                "row {bad} has length {}, expected {dim}",
                rows[bad].len()
            )));
        }
        let data = rows.iter().flatten().copied().collect();
        Self::new(class_id, snapshot_id, rows.len(), dim, data)
    }

    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn snapshot_id(&self) -> &str {
        &self.snapshot_id
    }

    /// Number of embeddings `k`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Embedding dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Converts every entry to another scalar type, re-checking finiteness
    /// (an `f64` that overflows `f32` becomes infinite).
    pub fn cast<U: Scalar>(&self) -> Result<ClassEmbeddings<U>, StoreError> {
        let data = self
            .data
            .iter()
            .map(|&v| U::from(v).unwrap_or_else(U::nan))
            .collect();
        ClassEmbeddings::new(
            self.class_id.clone(),
            self.snapshot_id.clone(),
            self.rows,
            self.dim,
            data,
        )
    }

    /// Same matrix with each row multiplied by the matching positive factor.
    pub fn scale_rows(&self, factors: &[T]) -> Result<Self, StoreError> {
        if factors.len() != self.rows {
            return Err(StoreError::DimensionMismatch(format!(
                "{} scale factors for {} rows",
                factors.len(),
                self.rows
            )));
        }
        let data = self
            .iter_rows()
            .zip(factors)
            .flat_map(|(row, &f)| row.iter().map(move |&v| v * f))
            .collect();
        Self::new(
            self.class_id.clone(),
            self.snapshot_id.clone(),
            self.rows,
            self.dim,
            data,
        )
    }

    pub fn with_ids(mut self, class_id: impl Into<String>, snapshot_id: impl Into<String>) -> Self {
        self.class_id = class_id.into();
        self.snapshot_id = snapshot_id.into();
        self
    }
}
