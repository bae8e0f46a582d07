use std::collections::BTreeMap;

use super::DenseMatrix;
use crate::error::{invalid, Result};

/// Symmetric sparse matrix.
///
/// Entries are kept once in canonical `(i, j)` form with `i <= j`; a full
/// row-compressed copy of both triangles backs the matrix products.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix {
    dim: usize,
    upper: Vec<(usize, usize, f64)>,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds the matrix from `(i, j, value)` triplets.
    ///
    /// A triplet with `i > j` is stored as `(j, i)`. Duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, v) in triplets {
            if i >= dim || j >= dim {
                return Err(invalid(format!("entry ({i}, {j}) out of bounds for dimension {dim}")));
            }
            if !v.is_finite() {
                return Err(invalid(format!("entry ({i}, {j}) is not finite")));
            }
            let key = if i <= j { (i, j) } else { (j, i) };
            *merged.entry(key).or_insert(0.0) += v;
        }
        let upper: Vec<_> = merged
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        Ok(Self::from_canonical(dim, upper))
    }

    fn from_canonical(dim: usize, upper: Vec<(usize, usize, f64)>) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for &(i, j, _) in &upper {
            counts[i + 1] += 1;
            if i != j {
                counts[j + 1] += 1;
            }
        }
        for r in 0..dim {
            counts[r + 1] += counts[r];
        }
        let row_ptr = counts.clone();
        let nnz = row_ptr[dim];
        let mut col_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next = counts;
        for &(i, j, v) in &upper {
            col_idx[next[i]] = j;
            values[next[i]] = v;
            next[i] += 1;
            if i != j {
                col_idx[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        // keep each row sorted by column
        for r in 0..dim {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            let mut row: Vec<(usize, f64)> =
                col_idx[lo..hi].iter().copied().zip(values[lo..hi].iter().copied()).collect();
            row.sort_by_key(|&(c, _)| c);
            for (k, (c, v)) in row.into_iter().enumerate() {
                col_idx[lo + k] = c;
                values[lo + k] = v;
            }
        }
        Self { dim, upper, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Canonical `(i, j, v)` entries with `i <= j`, sorted.
    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    /// Number of stored entries counting both triangles.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Iterates `(column, value)` over the nonzeros of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[lo..hi].iter().copied().zip(self.values[lo..hi].iter().copied())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Maximum absolute row sum; bounds the spectral radius.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.dim) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul_dense(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(x.nrows(), self.dim, "dimension mismatch in sparse product");
        let mut out = DenseMatrix::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let src = x.column(c);
            let mut dst = out.column_mut(c);
            for i in 0..self.dim {
                dst[i] = self.row(i).map(|(j, v)| v * src[j]).sum();
            }
        }
        out
    }

    /// Returns `diag(left) * self * diag(left)`.
    pub fn scale_symmetric(&self, left: &[f64]) -> Self {
        let upper = self
            .upper
            .iter()
            .map(|&(i, j, v)| (i, j, left[i] * v * left[j]))
            .collect();
        Self::from_canonical(self.dim, upper)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.upper {
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
        d
    }
}
