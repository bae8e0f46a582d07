//! Coefficient matrices from least-squares self-expression (linear or kernel)
//! or direct kernel similarity, and their post-processing into a sparse
//! affinity graph.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gram, randomized_svd, seeded_rng, solve_spd, DenseMatrix, SparseSymMatrix, DEFAULT_OVERSAMPLE, DEFAULT_POWER_ITERS};

/// Above this many points the Gaussian bandwidth is estimated from sampled pairs.
pub const EXACT_BANDWIDTH_LIMIT: usize = 20_000;
const BANDWIDTH_SAMPLE_PAIRS: usize = 1_000_000;

/// Above this many points the kernel model switches to the low-rank solve.
pub const LOW_RANK_THRESHOLD: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    Linear,
    /// Bandwidth is `xi` times the mean pairwise distance.
    Gaussian { xi: f64 },
    /// `(x·y + offset)^degree`
    Polynomial { offset: f64, degree: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Gaussian { xi } if xi > 0.0 && xi.is_finite() => Ok(()),
            KernelSpec::Gaussian { xi } => Err(invalid(format!("gaussian scale xi must be positive, got {xi}"))),
            KernelSpec::Polynomial { offset, degree } => {
                if !(offset >= 0.0 && offset.is_finite()) {
                    Err(invalid(format!("polynomial offset must be nonnegative, got {offset}")))
                } else if degree < 1 {
                    Err(invalid("polynomial degree must be at least 1"))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Polynomial { .. } => "polynomial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Linear least-squares self-expression.
    Lsr,
    /// Kernel least-squares self-expression.
    Klsr,
    /// The kernel matrix itself used as the coefficient matrix.
    KernelDirect,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Lsr => "lsr",
            ModelKind::Klsr => "klsr",
            ModelKind::KernelDirect => "kernel_direct",
        }
    }

    pub fn uses_lambda(&self) -> bool {
        !matches!(self, ModelKind::KernelDirect)
    }

    pub fn uses_kernel(&self) -> bool {
        !matches!(self, ModelKind::Lsr)
    }
}

/// One point of the search space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub model: ModelKind,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub tau: usize,
    pub approx_rank: Option<usize>,
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau < 1 {
            return Err(invalid("tau must be at least 1"));
        }
        if self.model.uses_lambda() && !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.model.uses_kernel() {
            self.kernel.validate()?;
        }
        Ok(())
    }
}

impl fmt::Display for CandidateConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.model.name())?;
        if self.model.uses_lambda() {
            write!(f, " lambda={}", self.lambda)?;
        }
        if self.model.uses_kernel() {
            match self.kernel {
                KernelSpec::Linear => write!(f, " kernel=linear")?,
                KernelSpec::Gaussian { xi } => write!(f, " kernel=gaussian(xi={xi})")?,
                KernelSpec::Polynomial { offset, degree } => {
                    write!(f, " kernel=polynomial(b={offset},q={degree})")?
                }
            }
        }
        write!(f, " tau={}", self.tau)
    }
}

/// Sparse symmetric nonnegative affinity with zero diagonal and its degrees.
#[derive(Debug, Clone)]
pub struct AffinityGraph {
    pub adjacency: SparseSymMatrix,
    pub degrees: Vec<f64>,
}

impl AffinityGraph {
    /// Validates and wraps an adjacency matrix.
    pub fn new(adjacency: SparseSymMatrix) -> Result<Self> {
        for &(i, j, v) in adjacency.triplets() {
            if i == j {
                return Err(invalid(format!("affinity has a diagonal entry at {i}")));
            }
            if v < 0.0 {
                return Err(invalid(format!("affinity entry ({i}, {j}) is negative")));
            }
        }
        let degrees = adjacency.row_sums();
        if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
            return Err(Error::DegenerateCandidate(format!("vertex {i} has zero degree")));
        }
        Ok(Self { adjacency, degrees })
    }

    pub fn from_dense(a: &DenseMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(invalid("affinity must be square"));
        }
        let n = a.nrows();
        let mut trips = Vec::new();
        for j in 0..n {
            for i in 0..=j {
                if a[(i, j)] != a[(j, i)] {
                    return Err(invalid(format!("affinity is not symmetric at ({i}, {j})")));
                }
                if a[(i, j)] != 0.0 {
                    trips.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::new(SparseSymMatrix::from_triplets(n, trips)?)
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }
}

/// Ridge self-expression `C = (XᵀX + λI)⁻¹XᵀX`, computed on whichever Gram
/// side is smaller.
pub fn lsr_coefficients(x: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    if x.nrows() < x.ncols() {
        lsr_dual(x, lambda)
    } else {
        lsr_primal(x, lambda)
    }
}

/// `(XᵀX + λI)⁻¹XᵀX` via the n×n Gram matrix.
pub fn lsr_primal(x: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_lambda(lambda)?;
    let n = x.ncols();
    let gram = gram(x);
    let system = &gram + DenseMatrix::identity(n, n) * lambda;
    solve_spd(&system, &gram)
}

/// `Xᵀ(λI + XXᵀ)⁻¹X` via the m×m outer Gram matrix (push-through form).
pub fn lsr_dual(x: &DenseMatrix, lambda: f64) -> Result<DenseMatrix> {
    check_lambda(lambda)?;
    let m = x.nrows();
    let outer = x * x.transpose();
    let system = outer + DenseMatrix::identity(m, m) * lambda;
    let inner = solve_spd(&system, x)?;
    Ok(x.transpose() * inner)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// Gaussian kernel bandwidth `xi / n² · Σᵢⱼ ‖xᵢ − xⱼ‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidth {
    pub value: f64,
    /// True when estimated from sampled pairs instead of all n² pairs.
    pub approximated: bool,
}

fn squared_distances(x: &DenseMatrix, gram: &DenseMatrix) -> DenseMatrix {
    let n = x.ncols();
    DenseMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0)
        }
    })
}

pub fn gaussian_bandwidth(x: &DenseMatrix, xi: f64) -> Result<Bandwidth> {
    let n = x.ncols();
    if n <= EXACT_BANDWIDTH_LIMIT {
        let gram = gram(x);
        let total: f64 = squared_distances(x, &gram).iter().map(|d| d.sqrt()).sum();
        return finish_bandwidth(xi * total / (n * n) as f64, false);
    }
    let mut rng = seeded_rng(0);
    let mut total = 0.0;
    for _ in 0..BANDWIDTH_SAMPLE_PAIRS {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        total += (x.column(i) - x.column(j)).norm();
    }
    finish_bandwidth(xi * total / BANDWIDTH_SAMPLE_PAIRS as f64, true)
}

fn finish_bandwidth(value: f64, approximated: bool) -> Result<Bandwidth> {
    if value > 0.0 && value.is_finite() {
        Ok(Bandwidth { value, approximated })
    } else {
        Err(Error::DegenerateData("gaussian bandwidth is zero (all points identical)".into()))
    }
}

/// Kernel Gram matrix `Kᵢⱼ = k(xᵢ, xⱼ)` over the columns of `x`.
pub fn kernel_matrix(x: &DenseMatrix, spec: KernelSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    if x.ncols() < 2 {
        return Err(invalid("kernel_matrix needs at least two points"));
    }
    let gram = gram(x);
    match spec {
        KernelSpec::Linear => Ok(gram),
        KernelSpec::Polynomial { offset, degree } => Ok(gram.map(|g| (g + offset).powi(degree as i32))),
        KernelSpec::Gaussian { xi } => {
            let bw = gaussian_bandwidth(x, xi)?;
            let denom = 2.0 * bw.value * bw.value;
            Ok(squared_distances(x, &gram).map(|d2| (-d2 / denom).exp()))
        }
    }
}

/// Kernel ridge self-expression `C = (K + λI)⁻¹K`.
///
/// With `approx_rank = Some(r)` the kernel is replaced by its rank-r randomized
/// SVD `V Σ Vᵀ`, giving `C ≈ V Σ(λI + Σ)⁻¹ Vᵀ`.
pub fn klsr_coefficients(k: &DenseMatrix, lambda: f64, approx_rank: Option<usize>, seed: u64) -> Result<DenseMatrix> {
    check_lambda(lambda)?;
    if !k.is_square() {
        return Err(invalid("kernel matrix must be square"));
    }
    let n = k.nrows();
    let sym = (k + k.transpose()) * 0.5;
    match approx_rank {
        None => {
            let system = &sym + DenseMatrix::identity(n, n) * lambda;
            solve_spd(&system, &sym).map_err(|_| {
                Error::NotPositiveDefinite("kernel matrix is indefinite beyond the ridge weight".into())
            })
        }
        Some(rank) => {
            if rank == 0 || rank > n {
                return Err(invalid(format!("approx_rank {rank} must be in 1..={n}")));
            }
            let oversample = DEFAULT_OVERSAMPLE.min(n - rank);
            let f = randomized_svd(&sym, rank, oversample, DEFAULT_POWER_ITERS, seed)?;
            if f.s.iter().any(|&s| s < -1e-8) {
                return Err(Error::NotPositiveDefinite("negative singular value".into()));
            }
            let mut scaled = f.v.clone();
            for (j, mut col) in scaled.column_iter_mut().enumerate() {
                let s = f.s[j];
                col *= s / (lambda + s);
            }
            Ok(scaled * f.v.transpose())
        }
    }
}

/// Default low-rank policy: rank `20k` once `n` exceeds [`LOW_RANK_THRESHOLD`].
pub fn default_approx_rank(n: usize, k: usize) -> Option<usize> {
    (n > LOW_RANK_THRESHOLD).then(|| (20 * k).min(n))
}

/// Coefficient matrix for a candidate. Independent of `tau`.
pub fn build_coefficients(x: &DenseMatrix, config: &CandidateConfig, seed: u64) -> Result<DenseMatrix> {
    config.validate()?;
    match config.model {
        ModelKind::Lsr => lsr_coefficients(x, config.lambda),
        ModelKind::Klsr => {
            let k = kernel_matrix(x, config.kernel)?;
            klsr_coefficients(&k, config.lambda, config.approx_rank, seed)
        }
        ModelKind::KernelDirect => kernel_matrix(x, config.kernel),
    }
}

/// Per-column sparsification: absolute values with the diagonal dropped, the
/// `tau` largest kept (ties to the lowest row index), then ℓ1-normalized.
/// Returns `(row, weight)` lists, one per column.
pub fn truncated_columns(c: &DenseMatrix, tau: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if tau < 1 {
        return Err(invalid("tau must be at least 1"));
    }
    if !c.is_square() {
        return Err(invalid("coefficient matrix must be square"));
    }
    let n = c.ncols();
    let keep = tau.min(n.saturating_sub(1));
    let mut out = Vec::with_capacity(n);
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(n);
    for j in 0..n {
        entries.clear();
        entries.extend(c.column(j).iter().enumerate().filter(|&(i, _)| i != j).map(|(i, v)| (i, v.abs())));
        if entries.iter().all(|&(_, v)| v == 0.0) {
            return Err(Error::DegenerateCandidate(format!("column {j} has no off-diagonal mass")));
        }
        let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        if keep < entries.len() {
            entries.select_nth_unstable_by(keep, order);
            entries.truncate(keep);
        }
        entries.sort_by(order);
        let total: f64 = entries.iter().map(|&(_, v)| v).sum();
        out.push(entries.iter().filter(|&&(_, v)| v > 0.0).map(|&(i, v)| (i, v / total)).collect());
    }
    Ok(out)
}

/// Sparse affinity `A = (C + Cᵀ)/2` from the truncated, normalized columns of `c`.
pub fn postprocess_affinity(c: &DenseMatrix, tau: usize) -> Result<AffinityGraph> {
    let columns = truncated_columns(c, tau)?;
    let n = c.ncols();
    let trips = columns
        .iter()
        .enumerate()
        .flat_map(|(j, col)| col.iter().map(move |&(i, w)| (i, j, 0.5 * w)));
    AffinityGraph::new(SparseSymMatrix::from_triplets(n, trips)?)
}
