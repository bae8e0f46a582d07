//! Gaussian-process surrogate with a Matérn-5/2 ARD kernel and the expected
//! improvement acquisition.

use nalgebra::{Cholesky, DVector, Dyn};
use statrs::function::erf::erfc;

use super::lowdisc::halton;
use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;

/// Amplitude `θ₀` and per-dimension length scales `θ₁..θ_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpParams {
    pub amplitude: f64,
    pub scales: Vec<f64>,
}

impl GpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(invalid(format!("amplitude must be positive, got {}", self.amplitude)));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid("length scales must be positive"));
        }
        Ok(())
    }
}

pub fn matern52_ard(s: &[f64], s2: &[f64], theta: &GpParams) -> f64 {
    let r2: f64 = s
        .iter()
        .zip(s2)
        .zip(&theta.scales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    let r5 = (5.0 * r2).sqrt();
    theta.amplitude * (1.0 + r5 + 5.0 / 3.0 * r2) * (-r5).exp()
}

/// Observations plus kernel settings. The prior mean is the mean of `values`.
#[derive(Debug, Clone)]
pub struct GpState {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub params: GpParams,
    pub jitter: f64,
}

impl GpState {
    pub fn prior_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn gram(points: &[Vec<f64>], params: &GpParams, jitter: f64) -> DenseMatrix {
    let n = points.len();
    DenseMatrix::from_fn(n, n, |i, j| {
        matern52_ard(&points[i], &points[j], params) + if i == j { jitter } else { 0.0 }
    })
}

/// A factored GP ready for repeated posterior queries.
#[derive(Debug, Clone)]
pub struct GpModel {
    points: Vec<Vec<f64>>,
    params: GpParams,
    mean: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    pub fn new(state: &GpState) -> Result<Self> {
        if state.points.is_empty() || state.points.len() != state.values.len() {
            return Err(invalid("gp needs one value per observed point and at least one point"));
        }
        state.params.validate()?;
        let mean = state.prior_mean();
        let chol = Cholesky::new(gram(&state.points, &state.params, state.jitter))
            .ok_or_else(|| Error::NotPositiveDefinite(format!("gp gram matrix with jitter {}", state.jitter)))?;
        let resid = DVector::from_iterator(state.values.len(), state.values.iter().map(|y| y - mean));
        let alpha = chol.solve(&resid);
        Ok(Self { points: state.points.clone(), params: state.params.clone(), mean, chol, alpha })
    }

    /// Posterior mean and variance at `q`.
    pub fn predict(&self, q: &[f64]) -> (f64, f64) {
        let kq = DVector::from_iterator(self.points.len(), self.points.iter().map(|p| matern52_ard(p, q, &self.params)));
        let mu = self.mean + kq.dot(&self.alpha);
        let v = self.chol.solve(&kq);
        let var = (self.params.amplitude - kq.dot(&v)).max(0.0);
        (mu, var)
    }
}

pub fn gp_posterior(state: &GpState, query: &[f64]) -> Result<(f64, f64)> {
    Ok(GpModel::new(state)?.predict(query))
}

/// Log marginal likelihood of the centred values, `None` if the Gram matrix
/// cannot be factored.
pub fn log_marginal_likelihood(points: &[Vec<f64>], values: &[f64], params: &GpParams, jitter: f64) -> Option<f64> {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let chol = Cholesky::new(gram(points, params, jitter))?;
    let y = DVector::from_iterator(n, values.iter().map(|v| v - mean));
    let alpha = chol.solve(&y);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    lml.is_finite().then_some(lml)
}

const FIT_STARTS: u64 = 16;
const FIT_RANGE: f64 = 1e3;

/// Relative jitter added to the Gram diagonal during fitting and prediction.
pub const JITTER: f64 = 1e-8;

fn data_scales(points: &[Vec<f64>], values: &[f64]) -> (f64, Vec<f64>) {
    let dim = points[0].len();
    let ranges = (0..dim)
        .map(|d| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[d]), hi.max(p[d])));
            if hi > lo { hi - lo } else { 1.0 }
        })
        .collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (var, ranges)
}

/// Default parameters used when the values carry no signal.
pub fn default_params(points: &[Vec<f64>]) -> GpParams {
    let (_, ranges) = data_scales(points, &vec![0.0; points.len()]);
    GpParams { amplitude: 1.0, scales: ranges.iter().map(|r| r / 2.0).collect() }
}

/// Maximizes the log marginal likelihood over `(ln θ₀, ln θ₁..ln θ_d)` by
/// coordinate search from 16 quasi-random starts. Each parameter is bounded to
/// `[1e-3, 1e3]` times its data scale (value variance or input range).
pub fn fit_gp_hyperparams(points: &[Vec<f64>], values: &[f64]) -> Result<GpParams> {
    if points.len() < 2 || points.len() != values.len() {
        return Err(invalid("hyperparameter fitting needs at least two observations"));
    }
    let (var, ranges) = data_scales(points, values);
    if !(var > 0.0 && var.is_finite()) {
        return Ok(default_params(points));
    }
    let jitter = JITTER * var;
    let centers: Vec<f64> = std::iter::once(var).chain(ranges.iter().copied()).map(f64::ln).collect();
    let half = FIT_RANGE.ln();
    let to_params = |z: &[f64]| GpParams { amplitude: z[0].exp(), scales: z[1..].iter().map(|v| v.exp()).collect() };
    let objective = |z: &[f64]| log_marginal_likelihood(points, values, &to_params(z), jitter).unwrap_or(f64::NEG_INFINITY);

    let dim = centers.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..FIT_STARTS {
        let mut z: Vec<f64> = if start == 0 {
            centers.clone()
        } else {
            halton(start - 1, dim).iter().zip(&centers).map(|(u, c)| c - half + 2.0 * half * u).collect()
        };
        let mut f = objective(&z);
        let mut step = 1.0;
        while step > 1e-3 {
            let mut improved = false;
            for d in 0..dim {
                for dir in [1.0, -1.0] {
                    let mut trial = z.clone();
                    trial[d] = (trial[d] + dir * step).clamp(centers[d] - half, centers[d] + half);
                    let ft = objective(&trial);
                    if ft > f {
                        z = trial;
                        f = ft;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step /= 2.0;
            }
        }
        if best.as_ref().is_none_or(|(bf, _)| f > *bf) {
            best = Some((f, z));
        }
    }
    match best {
        Some((f, z)) if f.is_finite() => Ok(to_params(&z)),
        _ => Ok(default_params(points)),
    }
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `E[max(g_min − Y, 0)]` for `Y ~ N(μ, σ²)`.
pub fn expected_improvement(mu: f64, sigma: f64, g_min: f64) -> f64 {
    let diff = g_min - mu;
    if sigma <= 0.0 {
        return diff.max(0.0);
    }
    let z = diff / sigma;
    (diff * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn unit(dim: usize) -> GpParams {
        GpParams { amplitude: 1.0, scales: vec![1.0; dim] }
    }

    #[test]
    fn matern_values() {
        let t = unit(2);
        assert_eq!(matern52_ard(&[0.3, 0.1], &[0.3, 0.1], &t), 1.0);
        let expected = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
        assert!((matern52_ard(&[0.0, 0.0], &[1.0, 0.0], &t) - expected).abs() < 1e-15);
        assert!((expected - 0.52399).abs() < 1e-5);
        let t = GpParams { amplitude: 2.0, scales: vec![0.5, 3.0] };
        assert_eq!(matern52_ard(&[0.1, 0.7], &[0.4, -1.0], &t), matern52_ard(&[0.4, -1.0], &[0.1, 0.7], &t));
    }

    #[test]
    fn interpolates_observations() {
        let state = GpState {
            points: vec![vec![0.0], vec![0.5], vec![1.0]],
            values: vec![1.0, -2.0, 0.5],
            params: unit(1),
            jitter: 1e-8,
        };
        let model = GpModel::new(&state).unwrap();
        for (p, y) in state.points.iter().zip(&state.values) {
            let (mu, var) = model.predict(p);
            assert!((mu - y).abs() < 1e-4 && var <= 1e-4);
        }
        let (mu, var) = model.predict(&[1e4]);
        assert!((mu - state.prior_mean()).abs() < 1e-3);
        assert!((var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn posterior_matches_explicit_inverse() {
        let points = vec![vec![0.1], vec![0.4], vec![0.9]];
        let values = vec![0.3, 1.2, -0.4];
        let params = GpParams { amplitude: 1.5, scales: vec![0.3] };
        let jitter = 1e-6;
        let state = GpState { points: points.clone(), values: values.clone(), params: params.clone(), jitter };
        let q = [0.6];
        let (mu, var) = gp_posterior(&state, &q).unwrap();

        // Gauss-Jordan inverse of K + jitter I
        let n = 3;
        let mut a = vec![vec![0.0; 2 * n]; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = matern52_ard(&points[i], &points[j], &params) + if i == j { jitter } else { 0.0 };
            }
            a[i][n + i] = 1.0;
        }
        for c in 0..n {
            let piv = a[c][c];
            for v in a[c].iter_mut() {
                *v /= piv;
            }
            for r in 0..n {
                if r != c {
                    let f = a[r][c];
                    let row_c = a[c].clone();
                    for (v, pc) in a[r].iter_mut().zip(row_c) {
                        *v -= f * pc;
                    }
                }
            }
        }
        let inv = |i: usize, j: usize| a[i][n + j];
        let m = values.iter().sum::<f64>() / 3.0;
        let kq: Vec<f64> = points.iter().map(|p| matern52_ard(p, &q, &params)).collect();
        let mut mu_ref = m;
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                mu_ref += kq[i] * inv(i, j) * (values[j] - m);
                quad += kq[i] * inv(i, j) * kq[j];
            }
        }
        assert!((mu - mu_ref).abs() < 1e-8);
        assert!((var - (1.5 - quad)).abs() < 1e-8);
    }

    #[test]
    fn ei_closed_form_cases() {
        assert_eq!(expected_improvement(0.7, 0.0, 0.7), 0.0);
        assert!((expected_improvement(0.2, 0.0, 0.7) - 0.5).abs() < 1e-15);
        assert!((expected_improvement(0.0, 1.0, 0.0) - 0.398942280401).abs() < 1e-9);
    }

    #[test]
    fn ei_matches_monte_carlo() {
        let mut rng = seeded_rng(17);
        for _ in 0..3 {
            let mu: f64 = rng.random_range(-1.0..1.0);
            let sigma: f64 = rng.random_range(0.1..2.0);
            let g_min: f64 = rng.random_range(-1.0..1.0);
            let samples = 1_000_000;
            let (mut sum, mut sum2) = (0.0, 0.0);
            for _ in 0..samples {
                let z: f64 = rng.sample(StandardNormal);
                let v = (g_min - (mu + sigma * z)).max(0.0);
                sum += v;
                sum2 += v * v;
            }
            let mean = sum / samples as f64;
            let se = ((sum2 / samples as f64 - mean * mean) / samples as f64).sqrt();
            let ei = expected_improvement(mu, sigma, g_min);
            assert!((ei - mean).abs() < 3.0 * se, "ei {ei} vs mc {mean} ± {se}");
        }
    }

    #[test]
    fn ei_nonnegative_and_monotone_in_sigma() {
        let mut prev = 0.0;
        for i in 0..100 {
            let ei = expected_improvement(0.3, i as f64 * 0.05, 0.1);
            assert!(ei >= prev && ei >= 0.0);
            prev = ei;
        }
    }

    #[test]
    fn constant_values_give_default_params() {
        let points = vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.5, 0.25]];
        let p = fit_gp_hyperparams(&points, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(p, GpParams { amplitude: 1.0, scales: vec![0.5, 0.25] });
    }

    #[test]
    fn two_observations_fit() {
        let p = fit_gp_hyperparams(&[vec![0.1], vec![0.8]], &[1.0, 3.0]).unwrap();
        assert!(p.validate().is_ok());
    }

    #[test]
    fn recovers_length_scales_from_prior_samples() {
        // one draw from a GP with unit scales on a 2-D grid in [0, 6]²
        let side = 10;
        let points: Vec<Vec<f64>> = (0..side * side)
            .map(|i| vec![(i % side) as f64 * 6.0 / (side - 1) as f64, (i / side) as f64 * 6.0 / (side - 1) as f64])
            .collect();
        let truth = unit(2);
        let chol = Cholesky::new(gram(&points, &truth, 1e-8)).unwrap();
        let mut rng = seeded_rng(3);
        let w = DVector::from_fn(points.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = chol.l() * w;
        let fit = fit_gp_hyperparams(&points, y.as_slice()).unwrap();
        for s in &fit.scales {
            assert!((1.0 / 3.0..=3.0).contains(s), "scale {s}");
        }
    }
}
