//! Dense and sparse numerical kernels shared by the rest of the crate.
//!
//! Dense storage is `nalgebra::DMatrix<f64>` (column-major), so a data matrix
//! with one point per column maps directly onto contiguous column slices.

mod lanczos;
mod rsvd;
mod sparse;

pub use lanczos::{partial_sym_eigs, EigenPairs, LanczosOptions};
pub use rsvd::{randomized_svd, SvdFactors, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};
pub use sparse::SparseSymMatrix;

use nalgebra::{Cholesky, DMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Rejects matrices holding NaN or infinite entries.
pub fn ensure_finite(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} contains non-finite entries")))
    }
}

/// Builds a matrix from column-major data, rejecting non-finite entries.
pub fn dense_from_columns(rows: usize, cols: usize, data: Vec<f64>) -> Result<DenseMatrix> {
    if data.len() != rows * cols {
        return Err(invalid(format!(
            "expected {} entries for a {rows}x{cols} matrix, got {}",
            rows * cols,
            data.len()
        )));
    }
    let m = DenseMatrix::from_vec(rows, cols, data);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

/// Solves `G Y = B` for symmetric positive definite `G` by Cholesky factorization.
/// `XᵀX` through the blocked product, with the lower triangle mirrored so the
/// result is exactly symmetric.
pub fn gram(x: &DenseMatrix) -> DenseMatrix {
    let mut g = x.transpose() * x;
    g.fill_lower_triangle_with_upper_triangle();
    g
}

pub fn solve_spd(g: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if !g.is_square() {
        return Err(invalid(format!("G must be square, got {}x{}", g.nrows(), g.ncols())));
    }
    if g.nrows() != b.nrows() {
        return Err(invalid(format!(
            "G is {}x{} but B has {} rows",
            g.nrows(),
            g.ncols(),
            b.nrows()
        )));
    }
    let chol = Cholesky::new(g.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("Cholesky factorization of {}x{} matrix failed", g.nrows(), g.ncols()))
    })?;
    Ok(chol.solve(b))
}

/// Scales every column to unit Euclidean norm. Zero columns are an error.
pub fn normalize_columns(x: &mut DenseMatrix) -> Result<()> {
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegenerateData(format!("column {j} has zero or non-finite norm")));
        }
        col /= norm;
    }
    Ok(())
}

pub(crate) fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Flips the sign of each column so that its largest-magnitude entry is positive.
pub(crate) fn fix_column_signs(v: &mut DenseMatrix) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0_f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}
