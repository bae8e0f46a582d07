//! Per-model Bayesian optimization of the eigen-gap score.
//!
//! Each model's hyperparameters are mapped to the unit cube (λ on a log
//! scale, integer parameters rounded at evaluation). The surrogate is fit to
//! `g = −ln(1 + reg)` (relative gap) or `g = −gap` (plain gap) and minimized
//! with expected improvement.

use std::collections::HashMap;

use log::debug;
use rand::Rng;
use rayon::prelude::*;

use super::gp::{expected_improvement, fit_gp_hyperparams, GpModel, GpParams, GpState, JITTER};
use super::lowdisc::shifted_halton;
use super::{check_k, evaluate_candidate, finish, CandidateScore, ModelSpec, SearchResult, SearchSpace};
use crate::affinity::{CandidateConfig, KernelSpec, ModelKind};
use crate::error::{invalid, Error, Result};
use crate::linalg::{normalize_columns, seeded_rng, DenseMatrix};
use crate::spectra::{GapKind, Scoring};

/// Quasi-random points evaluated before the surrogate takes over.
pub const INITIAL_DESIGN: usize = 8;
const EI_SAMPLES: u64 = 256;
const EI_REFINE_STARTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoOptions {
    pub budget_per_model: usize,
    pub initial_design: usize,
}

impl BoOptions {
    pub fn with_budget(budget_per_model: usize) -> Self {
        Self { budget_per_model, initial_design: INITIAL_DESIGN }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Coord {
    Lambda,
    Tau,
    Xi,
    Offset,
    Degree,
}

/// Maps unit-cube points to candidate configurations for one model.
struct Decoder<'a> {
    model: ModelKind,
    family: KernelSpec,
    coords: Vec<Coord>,
    space: &'a SearchSpace,
    approx_rank: Option<usize>,
}

impl<'a> Decoder<'a> {
    fn new(spec: &ModelSpec, space: &'a SearchSpace, approx_rank: Option<usize>) -> Self {
        let family = if spec.kind == ModelKind::Lsr { KernelSpec::Linear } else { spec.kernels[0] };
        let mut coords = Vec::new();
        if spec.kind.uses_lambda() {
            coords.push(Coord::Lambda);
        }
        coords.push(Coord::Tau);
        if spec.kind.uses_kernel() {
            match family {
                KernelSpec::Linear => {}
                KernelSpec::Gaussian { .. } => coords.push(Coord::Xi),
                KernelSpec::Polynomial { .. } => coords.extend([Coord::Offset, Coord::Degree]),
            }
        }
        let approx_rank = if spec.kind == ModelKind::Klsr { approx_rank } else { None };
        Self { model: spec.kind, family, coords, space, approx_rank }
    }

    fn dim(&self) -> usize {
        self.coords.len()
    }

    fn decode(&self, u: &[f64]) -> CandidateConfig {
        let b = &self.space.bounds;
        let lin = |(lo, hi): (f64, f64), t: f64| lo + t * (hi - lo);
        let int = |(lo, hi): (usize, usize), t: f64| (lo as f64 + t * (hi - lo) as f64).round() as usize;
        let mut config = CandidateConfig { model: self.model, lambda: 0.0, kernel: self.family, tau: b.tau.0, approx_rank: self.approx_rank };
        for (&c, &t) in self.coords.iter().zip(u) {
            match c {
                Coord::Lambda => config.lambda = lin((b.lambda.0.ln(), b.lambda.1.ln()), t).exp(),
                Coord::Tau => config.tau = int(b.tau, t),
                Coord::Xi => config.kernel = KernelSpec::Gaussian { xi: lin(b.xi, t) },
                Coord::Offset => {
                    if let KernelSpec::Polynomial { ref mut offset, .. } = config.kernel {
                        *offset = lin(b.offset, t);
                    }
                }
                Coord::Degree => {
                    if let KernelSpec::Polynomial { ref mut degree, .. } = config.kernel {
                        *degree = int((b.degree.0 as usize, b.degree.1 as usize), t) as u32;
                    }
                }
            }
        }
        config
    }
}

fn objective(score: &CandidateScore, scoring: Scoring) -> Option<f64> {
    if !score.is_valid() {
        return None;
    }
    Some(match scoring.gap {
        GapKind::Relative => -score.score.max(0.0).ln_1p(),
        GapKind::Plain => -score.score,
    })
}

/// Objective values with degenerate evaluations imputed as one worse than the worst observed.
fn surrogate_values(scores: &[CandidateScore], scoring: Scoring) -> Vec<f64> {
    let raw: Vec<Option<f64>> = scores.iter().map(|s| objective(s, scoring)).collect();
    let worst = raw.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let fill = if worst.is_finite() { worst + 1.0 } else { 0.0 };
    raw.into_iter().map(|v| v.unwrap_or(fill)).collect()
}

fn fit_model(points: &[Vec<f64>], values: &[f64]) -> Result<GpModel> {
    let params = fit_gp_hyperparams(points, values)?;
    let var = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64;
    let mut jitter = JITTER * var.max(params.amplitude).max(1e-12);
    for _ in 0..8 {
        let state = GpState { points: points.to_vec(), values: values.to_vec(), params: params.clone(), jitter };
        match GpModel::new(&state) {
            Ok(m) => return Ok(m),
            Err(Error::NotPositiveDefinite(_)) => jitter *= 100.0,
            Err(e) => return Err(e),
        }
    }
    let state = GpState { points: points.to_vec(), values: values.to_vec(), params: GpParams { amplitude: 1.0, scales: vec![1.0; points[0].len()] }, jitter: 1e-2 };
    GpModel::new(&state)
}

fn ei_at(model: &GpModel, u: &[f64], g_min: f64) -> f64 {
    let (mu, var) = model.predict(u);
    expected_improvement(mu, var.sqrt(), g_min)
}

/// Maximizes EI over the unit cube: quasi-random sampling, then coordinate
/// refinement from the best few samples.
fn maximize_ei(model: &GpModel, g_min: f64, shift: &[f64], offset: u64) -> Vec<f64> {
    let mut samples: Vec<(f64, Vec<f64>)> = (0..EI_SAMPLES)
        .map(|i| {
            let u = shifted_halton(offset + i, shift);
            (ei_at(model, &u, g_min), u)
        })
        .collect();
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = samples[0].clone();
    for (mut f, mut u) in samples.into_iter().take(EI_REFINE_STARTS) {
        let mut step = 0.1;
        while step > 1e-3 {
            let mut improved = false;
            for d in 0..u.len() {
                for dir in [1.0, -1.0] {
                    let mut trial = u.clone();
                    trial[d] = (trial[d] + dir * step).clamp(0.0, 1.0);
                    let ft = ei_at(model, &trial, g_min);
                    if ft > f {
                        (f, u) = (ft, trial);
                        improved = true;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if f > best.0 {
            best = (f, u);
        }
    }
    best.1
}

fn run_model(
    x: &DenseMatrix,
    k: usize,
    decoder: &Decoder<'_>,
    opts: BoOptions,
    scoring: Scoring,
    seed: u64,
    stream: u64,
) -> Result<Vec<CandidateScore>> {
    let mut rng = seeded_rng(seed);
    rng.set_stream(stream);
    let dim = decoder.dim();
    let design_shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();

    let mut cache: HashMap<String, CandidateScore> = HashMap::new();
    let mut evaluate = |u: &[f64]| -> Result<CandidateScore> {
        let config = decoder.decode(u);
        let key = config.to_string();
        if let Some(s) = cache.get(&key) {
            return Ok(s.clone());
        }
        let s = evaluate_candidate(x, k, &config, scoring, seed)?;
        cache.insert(key, s.clone());
        Ok(s)
    };

    let mut points: Vec<Vec<f64>> = Vec::with_capacity(opts.budget_per_model);
    let mut scores: Vec<CandidateScore> = Vec::with_capacity(opts.budget_per_model);
    for i in 0..opts.initial_design {
        let u = shifted_halton(i as u64, &design_shift);
        scores.push(evaluate(&u)?);
        points.push(u);
    }
    while scores.len() < opts.budget_per_model {
        let values = surrogate_values(&scores, scoring);
        let model = fit_model(&points, &values)?;
        let g_min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let ei_shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let u = maximize_ei(&model, g_min, &ei_shift, 0);
        let s = evaluate(&u)?;
        debug!("bo {}: {} -> {}", scores.len(), s.config, s.score);
        scores.push(s);
        points.push(u);
    }
    Ok(scores)
}

/// Bayesian optimization over the box bounds of `space`, one independent loop
/// per model. The first [`INITIAL_DESIGN`] evaluations of each loop are
/// quasi-random; the rest maximize expected improvement. The best candidate
/// across all models is embedded and clustered as in [`super::grid_search`].
pub fn bo_search(
    x: &DenseMatrix,
    k: usize,
    space: &SearchSpace,
    opts: BoOptions,
    scoring: Scoring,
    seed: u64,
) -> Result<SearchResult> {
    space.validate_bounds()?;
    if opts.initial_design == 0 || opts.budget_per_model < opts.initial_design {
        return Err(invalid(format!(
            "budget per model ({}) must be at least the initial design size ({})",
            opts.budget_per_model, opts.initial_design
        )));
    }
    let mut x = x.clone();
    normalize_columns(&mut x)?;
    check_k(x.ncols(), k)?;
    let approx_rank = space.low_rank.rank(x.ncols(), k);

    let per_model: Vec<Vec<CandidateScore>> = space
        .models
        .par_iter()
        .enumerate()
        .map(|(i, spec)| run_model(&x, k, &Decoder::new(spec, space, approx_rank), opts, scoring, seed, i as u64))
        .collect::<Result<_>>()?;
    finish(per_model.into_iter().flatten().collect(), k, seed)
}
