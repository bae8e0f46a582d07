//! Block Lanczos with full reorthogonalization for the largest eigenpairs of
//! a sparse symmetric matrix.
//!
//! The block width equals the number of requested pairs, so eigenvalues with
//! multiplicity up to that count are resolved (a single-vector Krylov space
//! only ever sees one direction of a repeated eigenvalue, and repeated
//! eigenvalues are the normal case for Laplacians of disconnected graphs).
//! Rayleigh-Ritz is applied to the whole basis, which stays orthonormal to
//! working precision through two passes of classical Gram-Schmidt.

use nalgebra::SymmetricEigen;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{fix_column_signs, seeded_rng, DenseMatrix, SparseSymMatrix};
use crate::error::{invalid, Error, Result};

/// Eigenvalues in descending order with matching unit eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    /// Residual tolerance relative to the matrix norm.
    pub tol: f64,
    /// Block-iteration cap; `None` means `30 * count + 300`.
    pub max_iters: Option<usize>,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: None }
    }
}

/// The `count` algebraically largest eigenpairs of `m`.
pub fn partial_sym_eigs(m: &SparseSymMatrix, count: usize, seed: u64) -> Result<EigenPairs> {
    partial_sym_eigs_with(m, count, seed, LanczosOptions::default())
}

pub fn partial_sym_eigs_with(
    m: &SparseSymMatrix,
    count: usize,
    seed: u64,
    opts: LanczosOptions,
) -> Result<EigenPairs> {
    let n = m.dim();
    if count == 0 || count > n {
        return Err(invalid(format!("partial_sym_eigs: count {count} must be in 1..={n}")));
    }
    let max_iters = opts.max_iters.unwrap_or(30 * count + 300);
    let scale = m.norm_inf().max(f64::MIN_POSITIVE);
    let threshold = opts.tol * scale;

    let mut rng = seeded_rng(seed);
    let mut basis = Basis::new(n);
    let start = DenseMatrix::from_fn(n, count, |_, _| StandardNormal.sample(&mut rng));
    let mut block = basis.extend(start, &mut rng);

    let mut next_check = (2 * count).max(8);
    let mut last = None;
    for iter in 0..max_iters {
        let image = m.mul_dense(&block);
        basis.push(&block, &image);

        let full = basis.len() == n;
        let candidate = if full || basis.len() >= next_check || iter + 1 == max_iters {
            next_check = basis.len() + count.max(basis.len() / 4);
            let ritz = basis.rayleigh_ritz(count);
            if full || ritz.max_residual() <= threshold {
                return Ok(ritz.into_pairs());
            }
            Some(ritz)
        } else {
            None
        };

        block = basis.extend(image, &mut rng);
        if block.ncols() == 0 {
            // invariant subspace: Rayleigh-Ritz on it is exact
            let ritz = basis.rayleigh_ritz(count);
            if ritz.max_residual() <= threshold {
                return Ok(ritz.into_pairs());
            }
            last = Some(ritz);
            break;
        }
        if candidate.is_some() {
            last = candidate;
        }
    }

    let ritz = last.unwrap_or_else(|| basis.rayleigh_ritz(count));
    Err(Error::NoConvergence {
        iterations: max_iters,
        max_residual: ritz.max_residual(),
        residuals: ritz.residuals,
    })
}

struct Ritz {
    values: Vec<f64>,
    vectors: DenseMatrix,
    residuals: Vec<f64>,
}

impl Ritz {
    fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    fn into_pairs(mut self) -> EigenPairs {
        fix_column_signs(&mut self.vectors);
        EigenPairs { values: self.values, vectors: self.vectors }
    }
}

/// Orthonormal Krylov basis `V` together with `M V`.
struct Basis {
    n: usize,
    v: Vec<f64>,
    mv: Vec<f64>,
}

impl Basis {
    fn new(n: usize) -> Self {
        Self { n, v: Vec::new(), mv: Vec::new() }
    }

    fn len(&self) -> usize {
        self.v.len() / self.n
    }

    fn view(&self) -> nalgebra::DMatrixView<'_, f64> {
        nalgebra::DMatrixView::from_slice(&self.v, self.n, self.len())
    }

    fn image_view(&self) -> nalgebra::DMatrixView<'_, f64> {
        nalgebra::DMatrixView::from_slice(&self.mv, self.n, self.len())
    }

    fn push(&mut self, block: &DenseMatrix, image: &DenseMatrix) {
        self.v.extend_from_slice(block.as_slice());
        self.mv.extend_from_slice(image.as_slice());
    }

    /// Orthonormalizes `w` against the basis and within itself. Columns that
    /// collapse are replaced by fresh random directions so the block keeps its
    /// width until the basis spans the whole space.
    fn extend(&self, mut w: DenseMatrix, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let room = self.n - self.len();
        let width = w.ncols().min(room);
        let mut accepted: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(width);

        // block pass against the basis first, measured against the original norms
        let original: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
        if self.len() > 0 {
            let v = self.view();
            let vt = v.transpose();
            for _ in 0..2 {
                let coeffs = &vt * &w;
                w -= v * coeffs;
            }
        }

        for (c, &norm) in original.iter().enumerate() {
            if accepted.len() == width {
                break;
            }
            let mut col = w.column(c).into_owned();
            let mut before = norm;
            let mut fresh = false;
            let mut attempts = 0;
            loop {
                if before > 0.0 {
                    for _ in 0..2 {
                        if fresh && self.len() > 0 {
                            let v = self.view();
                            let coeffs = v.tr_mul(&col);
                            col -= v * coeffs;
                        }
                        for a in &accepted {
                            let d = a.dot(&col);
                            col.axpy(-d, a, 1.0);
                        }
                    }
                }
                let after = col.norm();
                if before > 0.0 && after > 1e-8 * before {
                    col /= after;
                    accepted.push(col);
                    break;
                }
                attempts += 1;
                if attempts > 3 {
                    break;
                }
                col = nalgebra::DVector::from_fn(self.n, |_, _| StandardNormal.sample(rng));
                before = col.norm();
                fresh = true;
            }
        }
        if accepted.is_empty() {
            return DenseMatrix::zeros(self.n, 0);
        }
        DenseMatrix::from_columns(&accepted)
    }

    fn rayleigh_ritz(&self, count: usize) -> Ritz {
        let v = self.view();
        let mv = self.image_view();
        let mut h = v.transpose() * mv;
        h = (&h + h.transpose()) * 0.5;
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order.truncate(count);

        let s = eig.eigenvectors.select_columns(order.iter());
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = v * &s;
        let images = mv * &s;
        let residuals = values
            .iter()
            .enumerate()
            .map(|(j, &theta)| (images.column(j) - vectors.column(j) * theta).norm())
            .collect();
        Ritz { values, vectors, residuals }
    }
}
