//! Synthetic test beds: unions of random linear subspaces and unions of random
//! polynomial curves.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::linalg::{gaussian_matrix, normalize_columns, seeded_rng, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubspaceParams {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub clusters: usize,
    pub per_cluster: usize,
    pub noise_std: f64,
}

impl Default for SubspaceParams {
    fn default() -> Self {
        Self { ambient_dim: 30, subspace_dim: 3, clusters: 3, per_cluster: 50, noise_std: 0.0 }
    }
}

/// Curves `t ↦ Σₗ aₗ tˡ` with random coefficient vectors and `t ~ U[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveParams {
    pub ambient_dim: usize,
    pub degree: usize,
    pub clusters: usize,
    pub per_cluster: usize,
    pub noise_std: f64,
    /// Scale points to unit norm. Raw points keep the exact polynomial structure.
    pub normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    Subspaces(SubspaceParams),
    PolyManifolds(CurveParams),
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    /// One point per column.
    pub data: DenseMatrix,
    /// Ground-truth cluster per column, `0..clusters`, cluster-major order.
    pub labels: Vec<usize>,
    /// Orthonormal subspace bases (empty for curves).
    pub bases: Vec<DenseMatrix>,
}

pub fn generate_synthetic(kind: SyntheticKind, seed: u64) -> Result<Synthetic> {
    match kind {
        SyntheticKind::Subspaces(p) => subspaces(p, seed),
        SyntheticKind::PolyManifolds(p) => curves(p, seed),
    }
}

fn check_noise(std: f64) -> Result<()> {
    if std >= 0.0 && std.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("noise std must be nonnegative, got {std}")))
    }
}

fn subspaces(p: SubspaceParams, seed: u64) -> Result<Synthetic> {
    check_noise(p.noise_std)?;
    if p.subspace_dim == 0 || p.clusters == 0 || p.per_cluster == 0 {
        return Err(invalid("subspace dimension, cluster count and cluster size must be positive"));
    }
    if p.subspace_dim * p.clusters > p.ambient_dim {
        return Err(invalid(format!(
            "{} subspaces of dimension {} cannot be independent in dimension {}",
            p.clusters, p.subspace_dim, p.ambient_dim
        )));
    }
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, p.noise_std).expect("validated std");
    let n = p.clusters * p.per_cluster;
    let mut data = DenseMatrix::zeros(p.ambient_dim, n);
    let mut labels = Vec::with_capacity(n);
    let mut bases = Vec::with_capacity(p.clusters);
    for c in 0..p.clusters {
        let basis = gaussian_matrix(p.ambient_dim, p.subspace_dim, &mut rng).qr().q();
        for i in 0..p.per_cluster {
            let coeffs = gaussian_matrix(p.subspace_dim, 1, &mut rng);
            let mut x = &basis * coeffs;
            if p.noise_std > 0.0 {
                x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            data.set_column(c * p.per_cluster + i, &x.column(0));
            labels.push(c);
        }
        bases.push(basis);
    }
    normalize_columns(&mut data)?;
    Ok(Synthetic { data, labels, bases })
}

fn curves(p: CurveParams, seed: u64) -> Result<Synthetic> {
    check_noise(p.noise_std)?;
    if p.degree == 0 || p.clusters == 0 || p.per_cluster == 0 || p.ambient_dim == 0 {
        return Err(invalid("curve degree, dimension, cluster count and cluster size must be positive"));
    }
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, p.noise_std).expect("validated std");
    let n = p.clusters * p.per_cluster;
    let mut data = DenseMatrix::zeros(p.ambient_dim, n);
    let mut labels = Vec::with_capacity(n);
    for c in 0..p.clusters {
        let coeffs = gaussian_matrix(p.ambient_dim, p.degree + 1, &mut rng);
        for i in 0..p.per_cluster {
            let t: f64 = rng.random_range(-1.0..=1.0);
            let mut x = coeffs.column(0).into_owned();
            let mut power = 1.0;
            for l in 1..=p.degree {
                power *= t;
                x += coeffs.column(l) * power;
            }
            if p.noise_std > 0.0 {
                x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
            }
            data.set_column(c * p.per_cluster + i, &x);
            labels.push(c);
        }
    }
    if p.normalize {
        normalize_columns(&mut data)?;
    }
    Ok(Synthetic { data, labels, bases: Vec::new() })
}
