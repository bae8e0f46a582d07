//! Neural sparse embedding: a two-layer network regressing the spectral
//! embedding of a landmark subset, then applied to every point.

use log::debug;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kmeans::{kmeans, kmeans_centers, KMeansOptions, Partition};
use crate::linalg::{normalize_columns, seeded_rng, DenseMatrix};
use crate::search::{run_search, SearchMode, SearchResult, SearchSpace};
use crate::spectra::Scoring;

type Vector = nalgebra::DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative at pre-activation `h`; the ReLU subgradient at 0 is 0.
    fn derivative(&self, h: f64) -> f64 {
        match self {
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - h.tanh().powi(2),
        }
    }
}

/// `Z = W₂ act(W₁X + b₁1ᵀ) + b₂1ᵀ`
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: DenseMatrix,
    pub b1: Vector,
    pub w2: DenseMatrix,
    pub b2: Vector,
}

impl MlpParams {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(hidden, input),
            b1: Vector::zeros(hidden),
            w2: DenseMatrix::zeros(output, hidden),
            b2: Vector::zeros(output),
        }
    }

    /// He-scaled Gaussian weights and zero biases.
    pub fn init(input: usize, hidden: usize, output: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut p = Self::zeros(input, hidden, output);
        let n1 = Normal::new(0.0, (2.0 / input as f64).sqrt()).expect("positive std");
        p.w1.iter_mut().for_each(|v| *v = n1.sample(&mut rng));
        let n2 = Normal::new(0.0, (2.0 / hidden as f64).sqrt()).expect("positive std");
        p.w2.iter_mut().for_each(|v| *v = n2.sample(&mut rng));
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn blocks(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), self.b1.as_slice(), self.w2.as_slice(), self.b2.as_slice()]
    }

    fn blocks_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.as_mut_slice(), self.b1.as_mut_slice(), self.w2.as_mut_slice(), self.b2.as_mut_slice()]
    }

    fn check_shapes(&self, x: &DenseMatrix) -> Result<()> {
        let ok = self.b1.len() == self.hidden_dim()
            && self.w2.ncols() == self.hidden_dim()
            && self.b2.len() == self.output_dim()
            && x.nrows() == self.input_dim();
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "network shapes {}x{} / {}x{} do not fit input with {} rows",
                self.w1.nrows(),
                self.w1.ncols(),
                self.w2.nrows(),
                self.w2.ncols(),
                x.nrows()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NseConfig {
    pub hidden: usize,
    pub gamma: f64,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for NseConfig {
    fn default() -> Self {
        Self {
            hidden: 200,
            gamma: 1e-5,
            epochs: 200,
            batch: 128,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl NseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch == 0 {
            return Err(invalid("hidden width and batch size must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("gamma must be nonnegative, got {}", self.gamma)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps_adam.is_nan() || self.eps_adam <= 0.0 {
            return Err(invalid("adam constants out of range"));
        }
        Ok(())
    }
}

fn hidden_pre(params: &MlpParams, x: &DenseMatrix) -> DenseMatrix {
    let mut h = &params.w1 * x;
    for mut col in h.column_iter_mut() {
        col += &params.b1;
    }
    h
}

fn output(params: &MlpParams, a: &DenseMatrix) -> DenseMatrix {
    let mut y = &params.w2 * a;
    for mut col in y.column_iter_mut() {
        col += &params.b2;
    }
    y
}

fn forward_block(params: &MlpParams, x: &DenseMatrix, act: Activation) -> DenseMatrix {
    let a = hidden_pre(params, x).map(|v| act.apply(v));
    output(params, &a)
}

/// Loss `‖Ẑ − f(X̂)‖²/(2s) + γ/2 (‖W₁‖² + ‖W₂‖²)` and its gradient.
pub fn nse_loss_and_grad(
    params: &MlpParams,
    x: &DenseMatrix,
    z: &DenseMatrix,
    gamma: f64,
    act: Activation,
) -> Result<(f64, MlpParams)> {
    params.check_shapes(x)?;
    if z.shape() != (params.output_dim(), x.ncols()) || x.ncols() == 0 {
        return Err(invalid("targets must have one column per input and one row per output"));
    }
    let s = x.ncols() as f64;
    let h = hidden_pre(params, x);
    let a = h.map(|v| act.apply(v));
    let r = output(params, &a) - z;
    let reg = params.w1.norm_squared() + params.w2.norm_squared();
    let loss = r.norm_squared() / (2.0 * s) + 0.5 * gamma * reg;

    let dy = r / s;
    let w2 = &dy * a.transpose() + &params.w2 * gamma;
    let b2 = dy.column_sum();
    let mut dh = params.w2.transpose() * &dy;
    dh.zip_apply(&h, |g, hv| *g *= act.derivative(hv));
    let w1 = &dh * x.transpose() + &params.w1 * gamma;
    let b1 = dh.column_sum();
    Ok((loss, MlpParams { w1, b1, w2, b2 }))
}

/// Full-batch loss.
pub fn nse_loss(params: &MlpParams, x: &DenseMatrix, z: &DenseMatrix, gamma: f64, act: Activation) -> Result<f64> {
    params.check_shapes(x)?;
    let r = forward_block(params, x, act) - z;
    Ok(r.norm_squared() / (2.0 * x.ncols() as f64) + 0.5 * gamma * (params.w1.norm_squared() + params.w2.norm_squared()))
}

const FORWARD_CHUNK: usize = 4096;

/// Applies the network to every column of `x`.
pub fn nse_forward(params: &MlpParams, x: &DenseMatrix, act: Activation) -> Result<DenseMatrix> {
    params.check_shapes(x)?;
    let n = x.ncols();
    if n <= FORWARD_CHUNK {
        return Ok(forward_block(params, x, act));
    }
    let starts: Vec<usize> = (0..n).step_by(FORWARD_CHUNK).collect();
    let parts: Vec<DenseMatrix> = starts
        .par_iter()
        .map(|&s| forward_block(params, &x.columns(s, FORWARD_CHUNK.min(n - s)).into_owned(), act))
        .collect();
    let mut z = DenseMatrix::zeros(params.output_dim(), n);
    for (&s, part) in starts.iter().zip(&parts) {
        z.columns_mut(s, part.ncols()).copy_from(part);
    }
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct NseFit {
    pub params: MlpParams,
    /// Full-batch loss before training and after each epoch.
    pub losses: Vec<f64>,
}

/// Mini-batch Adam on [`nse_loss_and_grad`]. A batch size larger than the
/// number of samples means full-batch steps.
pub fn nse_train(x: &DenseMatrix, z: &DenseMatrix, config: &NseConfig) -> Result<NseFit> {
    config.validate()?;
    let s = x.ncols();
    if s == 0 || z.ncols() != s {
        return Err(invalid("inputs and targets need the same positive number of columns"));
    }
    let mut params = MlpParams::init(x.nrows(), config.hidden, z.nrows(), config.seed);
    let mut m = MlpParams::zeros(x.nrows(), config.hidden, z.nrows());
    let mut v = m.clone();
    let mut rng = seeded_rng(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..s).collect();
    let batch = config.batch.min(s);

    let mut losses = Vec::with_capacity(config.epochs + 1);
    let initial = nse_loss(&params, x, z, config.gamma, config.activation)?;
    if !initial.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    losses.push(initial);
    let mut step = 0i32;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(batch) {
            let xb = x.select_columns(idx);
            let zb = z.select_columns(idx);
            let (_, grad) = nse_loss_and_grad(&params, &xb, &zb, config.gamma, config.activation)?;
            step += 1;
            let c1 = 1.0 - config.beta1.powi(step);
            let c2 = 1.0 - config.beta2.powi(step);
            for (((p, g), mb), vb) in params.blocks_mut().into_iter().zip(grad.blocks()).zip(m.blocks_mut()).zip(v.blocks_mut()) {
                for i in 0..p.len() {
                    mb[i] = config.beta1 * mb[i] + (1.0 - config.beta1) * g[i];
                    vb[i] = config.beta2 * vb[i] + (1.0 - config.beta2) * g[i] * g[i];
                    p[i] -= config.lr * (mb[i] / c1) / ((vb[i] / c2).sqrt() + config.eps_adam);
                }
            }
        }
        let loss = nse_loss(&params, x, z, config.gamma, config.activation)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        losses.push(loss);
    }
    debug!("nse loss {} -> {}", losses[0], losses[losses.len() - 1]);
    Ok(NseFit { params, losses })
}

#[derive(Debug, Clone)]
pub struct NseOutcome {
    pub partition: Partition,
    /// Search on the landmarks.
    pub search: SearchResult,
    pub fit: NseFit,
}

/// Landmark search followed by the network extension to all points.
///
/// Landmarks are k-means centers of the normalized data, renormalized to unit
/// length. The winning landmark embedding is regressed by [`nse_train`], the
/// network is applied to every point and its output clustered with k-means.
#[allow(clippy::too_many_arguments)]
pub fn eggs_nse(
    x: &DenseMatrix,
    k: usize,
    space: &SearchSpace,
    mode: SearchMode,
    scoring: Scoring,
    landmarks: usize,
    config: &NseConfig,
    seed: u64,
) -> Result<NseOutcome> {
    let n = x.ncols();
    if landmarks >= n || landmarks < k + 1 {
        return Err(invalid(format!("landmark count must satisfy k + 1 <= landmarks < n, got {landmarks} with n = {n}, k = {k}")));
    }
    config.validate()?;
    let mut xn = x.clone();
    normalize_columns(&mut xn)?;
    let mut centers = kmeans_centers(&xn, landmarks, seed)?;
    normalize_columns(&mut centers)?;
    let search = run_search(&centers, k, space, mode, scoring, seed)?;
    let fit = nse_train(&centers, &search.embedding, config)?;
    let z = nse_forward(&fit.params, &xn, config.activation)?;
    let partition = kmeans(&z, k, KMeansOptions::default(), seed)?;
    Ok(NseOutcome { partition, search, fit })
}
