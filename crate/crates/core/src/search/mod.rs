//! Model and hyperparameter search driven by the Laplacian eigen-gap.
//!
//! [`grid_search`] walks a finite grid model → λ → τ, building each
//! coefficient matrix once per (model, λ, kernel) and sparsifying it for every
//! τ. [`bo_search`] runs one Bayesian-optimization loop per model over a box
//! of continuous and integer hyperparameters. Both pick the candidate with the
//! largest score and cluster its spectral embedding with k-means.

mod bo;
pub mod gp;
mod lowdisc;

pub use bo::{bo_search, BoOptions, INITIAL_DESIGN};
pub use lowdisc::halton;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affinity::{build_coefficients, default_approx_rank, postprocess_affinity, CandidateConfig, KernelSpec, ModelKind};
use crate::error::{invalid, Error, Result};
use crate::kmeans::{kmeans, KMeansOptions, Partition};
use crate::linalg::{normalize_columns, DenseMatrix};
use crate::spectra::{laplacian_spectrum, spectral_embedding, LaplacianSpectrum, Scoring};

/// A model family with the kernel settings to try (grid) or whose kernel
/// family is tuned inside the box bounds (Bayesian optimization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ignored for [`ModelKind::Lsr`].
    pub kernels: Vec<KernelSpec>,
}

impl ModelSpec {
    pub fn lsr() -> Self {
        Self { kind: ModelKind::Lsr, kernels: vec![KernelSpec::Linear] }
    }

    pub fn klsr(kernel: KernelSpec) -> Self {
        Self { kind: ModelKind::Klsr, kernels: vec![kernel] }
    }

    pub fn kernel_direct(kernel: KernelSpec) -> Self {
        Self { kind: ModelKind::KernelDirect, kernels: vec![kernel] }
    }

    fn grid_kernels(&self) -> Vec<KernelSpec> {
        match self.kind {
            ModelKind::Lsr => vec![KernelSpec::Linear],
            _ => self.kernels.clone(),
        }
    }
}

/// Box constraints for Bayesian optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoBounds {
    pub lambda: (f64, f64),
    pub tau: (usize, usize),
    pub offset: (f64, f64),
    pub degree: (u32, u32),
    pub xi: (f64, f64),
}

impl Default for BoBounds {
    fn default() -> Self {
        Self { lambda: (1e-3, 1.0), tau: (5, 50), offset: (0.0, 1e3), degree: (1, 5), xi: (0.5, 5.0) }
    }
}

/// When to use the low-rank kernel solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LowRankPolicy {
    /// Rank `20k` once `n > 5000`.
    #[default]
    Auto,
    Never,
    Fixed(usize),
}

impl LowRankPolicy {
    fn rank(&self, n: usize, k: usize) -> Option<usize> {
        match *self {
            LowRankPolicy::Auto => default_approx_rank(n, k),
            LowRankPolicy::Never => None,
            LowRankPolicy::Fixed(r) => Some(r.min(n)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub models: Vec<ModelSpec>,
    pub lambdas: Vec<f64>,
    pub taus: Vec<usize>,
    pub bounds: BoBounds,
    pub low_rank: LowRankPolicy,
}

impl SearchSpace {
    /// Linear, Gaussian-kernel and direct Gaussian similarity models over
    /// λ ∈ {0.01, 0.1, 1} and τ ∈ {5, …, 15}.
    pub fn default_grid() -> Self {
        Self {
            models: vec![
                ModelSpec::lsr(),
                ModelSpec::klsr(KernelSpec::Gaussian { xi: 1.0 }),
                ModelSpec::kernel_direct(KernelSpec::Gaussian { xi: 1.0 }),
            ],
            lambdas: vec![0.01, 0.1, 1.0],
            taus: (5..=15).collect(),
            bounds: BoBounds::default(),
            low_rank: LowRankPolicy::Auto,
        }
    }

    /// Direct Gaussian similarity plus polynomial- and Gaussian-kernel
    /// regression, with kernel parameters tuned inside the default bounds.
    pub fn default_bo() -> Self {
        Self {
            models: vec![
                ModelSpec::kernel_direct(KernelSpec::Gaussian { xi: 1.0 }),
                ModelSpec::klsr(KernelSpec::Polynomial { offset: 0.0, degree: 1 }),
                ModelSpec::klsr(KernelSpec::Gaussian { xi: 1.0 }),
            ],
            ..Self::default_grid()
        }
    }

    pub fn validate_grid(&self) -> Result<()> {
        if self.models.is_empty() || self.taus.is_empty() {
            return Err(invalid("search space needs at least one model and one tau"));
        }
        if self.models.iter().any(|m| m.kind.uses_lambda()) && self.lambdas.is_empty() {
            return Err(invalid("search space needs at least one lambda"));
        }
        if self.models.iter().any(|m| m.kind.uses_kernel() && m.kernels.is_empty()) {
            return Err(invalid("kernel models need at least one kernel setting"));
        }
        Ok(())
    }

    pub fn validate_bounds(&self) -> Result<()> {
        let b = &self.bounds;
        let ordered = b.lambda.0 <= b.lambda.1
            && b.tau.0 <= b.tau.1
            && b.offset.0 <= b.offset.1
            && b.degree.0 <= b.degree.1
            && b.xi.0 <= b.xi.1;
        if !ordered {
            return Err(invalid("search bounds must satisfy min <= max"));
        }
        if b.lambda.0 <= 0.0 || b.tau.0 < 1 || b.degree.0 < 1 || b.xi.0 <= 0.0 || b.offset.0 < 0.0 {
            return Err(invalid("search bounds out of the valid parameter domain"));
        }
        if self.models.is_empty() {
            return Err(invalid("search space needs at least one model"));
        }
        if self.models.iter().any(|m| m.kind.uses_kernel() && m.kernels.is_empty()) {
            return Err(invalid("kernel models need a kernel family"));
        }
        Ok(())
    }

    /// Candidates in model → kernel → λ → τ order, grouped by shared coefficient matrix.
    pub fn grid_groups(&self, n: usize, k: usize) -> Vec<Vec<CandidateConfig>> {
        let approx_rank = self.low_rank.rank(n, k);
        let mut groups = Vec::new();
        for model in &self.models {
            let lambdas: &[f64] = if model.kind.uses_lambda() { &self.lambdas } else { &[0.0] };
            for kernel in model.grid_kernels() {
                for &lambda in lambdas {
                    let approx_rank = if model.kind == ModelKind::Klsr { approx_rank } else { None };
                    groups.push(
                        self.taus
                            .iter()
                            .map(|&tau| CandidateConfig { model: model.kind, lambda, kernel, tau, approx_rank })
                            .collect(),
                    );
                }
            }
        }
        groups
    }

    pub fn grid_len(&self, n: usize, k: usize) -> usize {
        self.grid_groups(n, k).iter().map(Vec::len).sum()
    }
}

/// Score of one candidate. `score` is `-inf` exactly when the candidate was
/// degenerate, in which case `spectrum` is `None` and `note` says why.
#[derive(Debug, Clone)]
pub struct CandidateScore {
    pub config: CandidateConfig,
    pub score: f64,
    pub spectrum: Option<LaplacianSpectrum>,
    pub note: Option<String>,
}

impl CandidateScore {
    pub fn is_valid(&self) -> bool {
        self.spectrum.is_some()
    }

    fn degenerate(config: CandidateConfig, why: String) -> Self {
        Self { config, score: f64::NEG_INFINITY, spectrum: None, note: Some(why) }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Every evaluated candidate in evaluation order.
    pub scores: Vec<CandidateScore>,
    pub winner: usize,
    /// Unit-column spectral embedding (`k × n`) of the winner.
    pub embedding: DenseMatrix,
    pub partition: Partition,
}

impl SearchResult {
    pub fn winner_score(&self) -> &CandidateScore {
        &self.scores[self.winner]
    }
}

/// Errors that disqualify a single candidate without aborting the search.
fn is_candidate_failure(e: &Error) -> bool {
    matches!(e, Error::DegenerateCandidate(_) | Error::DegenerateData(_) | Error::NotPositiveDefinite(_))
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k + 1 > n {
        return Err(invalid(format!("need 1 <= k and k + 1 <= n, got k = {k}, n = {n}")));
    }
    Ok(())
}

fn score_from_coefficients(
    c: &DenseMatrix,
    k: usize,
    config: CandidateConfig,
    scoring: Scoring,
    seed: u64,
) -> Result<CandidateScore> {
    let graph = match postprocess_affinity(c, config.tau) {
        Ok(g) => g,
        Err(e) if is_candidate_failure(&e) => return Ok(CandidateScore::degenerate(config, e.to_string())),
        Err(e) => return Err(e),
    };
    let spectrum = laplacian_spectrum(&graph, k, seed)?;
    let score = scoring.score(&spectrum);
    Ok(CandidateScore { config, score, spectrum: Some(spectrum), note: None })
}

/// Builds, sparsifies and scores one candidate. `x` must have unit columns.
pub fn evaluate_candidate(
    x: &DenseMatrix,
    k: usize,
    config: &CandidateConfig,
    scoring: Scoring,
    seed: u64,
) -> Result<CandidateScore> {
    check_k(x.ncols(), k)?;
    config.validate()?;
    match build_coefficients(x, config, seed) {
        Ok(c) => score_from_coefficients(&c, k, *config, scoring, seed),
        Err(e) if is_candidate_failure(&e) => Ok(CandidateScore::degenerate(*config, e.to_string())),
        Err(e) => Err(e),
    }
}

/// Index of the highest score; ties go to the earliest candidate.
pub fn argmax_score(scores: &[CandidateScore]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.is_valid() && best.is_none_or(|b| s.score > scores[b].score) {
            best = Some(i);
        }
    }
    best
}

/// Picks the winner, embeds it and runs k-means. A winner whose embedding is
/// degenerate yields to the next best candidate.
pub(crate) fn finish(scores: Vec<CandidateScore>, k: usize, seed: u64) -> Result<SearchResult> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_valid()).collect();
    order.sort_by(|&a, &b| scores[b].score.total_cmp(&scores[a].score).then(a.cmp(&b)));
    for idx in order {
        let spectrum = scores[idx].spectrum.as_ref().expect("valid candidate has a spectrum");
        match spectral_embedding(spectrum) {
            Ok(embedding) => {
                let partition = kmeans(&embedding, k, KMeansOptions::default(), seed)?;
                debug!("winner {} with score {}", scores[idx].config, scores[idx].score);
                return Ok(SearchResult { scores, winner: idx, embedding, partition });
            }
            Err(e) if is_candidate_failure(&e) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::SearchFailed {
        candidates: scores
            .iter()
            .map(|s| format!("{}: {}", s.config, s.note.as_deref().unwrap_or("degenerate embedding")))
            .collect(),
    })
}

/// Exhaustive search over the grid in `space`.
///
/// Normalizes the columns of `x`, evaluates every candidate, and clusters the
/// embedding of the best one. Results do not depend on the rayon thread count.
pub fn grid_search(x: &DenseMatrix, k: usize, space: &SearchSpace, scoring: Scoring, seed: u64) -> Result<SearchResult> {
    space.validate_grid()?;
    let mut x = x.clone();
    normalize_columns(&mut x)?;
    check_k(x.ncols(), k)?;

    let groups = space.grid_groups(x.ncols(), k);
    let scored: Vec<Vec<CandidateScore>> = groups
        .par_iter()
        .map(|group| -> Result<Vec<CandidateScore>> {
            let c = match build_coefficients(&x, &group[0], seed) {
                Ok(c) => c,
                Err(e) if is_candidate_failure(&e) => {
                    return Ok(group.iter().map(|cfg| CandidateScore::degenerate(*cfg, e.to_string())).collect());
                }
                Err(e) => return Err(e),
            };
            group
                .par_iter()
                .map(|cfg| score_from_coefficients(&c, k, *cfg, scoring, seed))
                .collect()
        })
        .collect::<Result<_>>()?;
    finish(scored.into_iter().flatten().collect(), k, seed)
}

/// Which search strategy to run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SearchMode {
    Grid,
    Bo(BoOptions),
}

pub fn run_search(x: &DenseMatrix, k: usize, space: &SearchSpace, mode: SearchMode, scoring: Scoring, seed: u64) -> Result<SearchResult> {
    match mode {
        SearchMode::Grid => grid_search(x, k, space, scoring, seed),
        SearchMode::Bo(opts) => bo_search(x, k, space, opts, scoring, seed),
    }
}
