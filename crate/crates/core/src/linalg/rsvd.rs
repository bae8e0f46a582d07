//! Randomized range-finder SVD with power iterations.

use super::{gaussian_matrix, seeded_rng, DenseMatrix};
use crate::error::{invalid, Result};

pub const DEFAULT_OVERSAMPLE: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;

/// Rank-`r` factors `M ≈ U diag(S) Vᵀ` with `S` sorted descending.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.v.transpose()
    }
}

fn orthonormal_basis(y: DenseMatrix) -> DenseMatrix {
    y.qr().q()
}

/// Approximate rank-`rank` SVD of `m`.
///
/// Samples the range of `m` with `rank + oversample` Gaussian test vectors,
/// refines it with `power_iters` subspace iterations, and takes an exact SVD
/// of the small projected matrix. Identical inputs and seed give bit-identical
/// factors.
pub fn randomized_svd(
    m: &DenseMatrix,
    rank: usize,
    oversample: usize,
    power_iters: usize,
    seed: u64,
) -> Result<SvdFactors> {
    let (rows, cols) = m.shape();
    if rank == 0 {
        return Err(invalid("randomized_svd: rank must be at least 1"));
    }
    let width = rank + oversample;
    if width > rows.min(cols) {
        return Err(invalid(format!(
            "randomized_svd: rank + oversample = {width} exceeds min dimension {}",
            rows.min(cols)
        )));
    }

    let mut rng = seeded_rng(seed);
    let omega = gaussian_matrix(cols, width, &mut rng);
    let mut q = orthonormal_basis(m * omega);
    for _ in 0..power_iters {
        let z = orthonormal_basis(m.transpose() * &q);
        q = orthonormal_basis(m * z);
    }

    let b = q.transpose() * m;
    let svd = b.svd(true, true);
    let ub = svd.u.expect("svd computed with u");
    let vt = svd.v_t.expect("svd computed with v_t");

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    order.truncate(rank);

    let s = order.iter().map(|&i| svd.singular_values[i]).collect();
    let ub = ub.select_columns(order.iter());
    let v = vt.select_rows(order.iter()).transpose();
    Ok(SvdFactors { u: q * ub, s, v })
}
