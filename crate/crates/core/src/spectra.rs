//! Normalized Laplacian spectra and eigen-gap scores.

use serde::{Deserialize, Serialize};

use crate::affinity::AffinityGraph;
use crate::error::{invalid, Error, Result};
use crate::linalg::{partial_sym_eigs, DenseMatrix, SparseSymMatrix};

pub const DEFAULT_EPS: f64 = 1e-6;

/// The `k + 1` smallest eigenvalues of `L = I − D^{-1/2} A D^{-1/2}` in
/// ascending order, and the eigenvectors of the first `k` as columns.
#[derive(Debug, Clone)]
pub struct LaplacianSpectrum {
    pub k: usize,
    pub sigmas: Vec<f64>,
    pub vectors: DenseMatrix,
}

/// Which eigen-gap drives candidate selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// `(σ_{k+1} − mean σ_{1..k}) / (mean σ_{1..k} + ε)`
    #[default]
    Relative,
    /// `σ_{k+1} − σ_k`
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scoring {
    pub gap: GapKind,
    pub eps: f64,
}

impl Default for Scoring {
    fn default() -> Self {
        Self { gap: GapKind::Relative, eps: DEFAULT_EPS }
    }
}

impl Scoring {
    pub fn score(&self, s: &LaplacianSpectrum) -> f64 {
        match self.gap {
            GapKind::Relative => relative_eigen_gap(s, self.eps),
            GapKind::Plain => plain_eigen_gap(s),
        }
    }
}

/// `D^{-1/2} A D^{-1/2}`
pub fn normalized_adjacency(g: &AffinityGraph) -> SparseSymMatrix {
    let inv_sqrt: Vec<f64> = g.degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
    g.adjacency.scale_symmetric(&inv_sqrt)
}

pub fn laplacian_spectrum(g: &AffinityGraph, k: usize, seed: u64) -> Result<LaplacianSpectrum> {
    let n = g.len();
    if k == 0 || k + 1 > n {
        return Err(invalid(format!("need 1 <= k and k + 1 <= n, got k = {k}, n = {n}")));
    }
    if let Some(i) = g.degrees.iter().position(|&d| d.is_nan() || d <= 0.0) {
        return Err(invalid(format!("vertex {i} has zero degree")));
    }
    let pairs = partial_sym_eigs(&normalized_adjacency(g), k + 1, seed)?;
    let sigmas = pairs.values.iter().map(|rho| (1.0 - rho).clamp(0.0, 2.0)).collect();
    let vectors = pairs.vectors.columns(0, k).into_owned();
    Ok(LaplacianSpectrum { k, sigmas, vectors })
}

fn mean_small(s: &LaplacianSpectrum) -> f64 {
    s.sigmas[..s.k].iter().sum::<f64>() / s.k as f64
}

pub fn relative_eigen_gap(s: &LaplacianSpectrum, eps: f64) -> f64 {
    let mean = mean_small(s);
    (s.sigmas[s.k] - mean) / (mean + eps)
}

pub fn plain_eigen_gap(s: &LaplacianSpectrum) -> f64 {
    s.sigmas[s.k] - s.sigmas[s.k - 1]
}

/// Rows of the eigenvector matrix as points (`k × n`), each scaled to unit norm.
pub fn spectral_embedding(s: &LaplacianSpectrum) -> Result<DenseMatrix> {
    let mut z = s.vectors.transpose();
    for (j, mut col) in z.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm == 0.0 {
            return Err(Error::DegenerateCandidate(format!("point {j} has a zero spectral embedding")));
        }
        col /= norm;
    }
    Ok(z)
}
