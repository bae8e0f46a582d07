//! Network training behaviour and the constructive cluster-separating network.

mod common;

use common::{brute_accuracy, rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use specsearch::kmeans::{kmeans, KMeansOptions};
use specsearch::nse::*;
use specsearch::search::{SearchMode, SearchSpace, ModelSpec};
use specsearch::spectra::Scoring;
use specsearch::synthetic::{generate_synthetic, SubspaceParams, SyntheticKind};
use specsearch::Error;

fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(m, n, |_, _| r.sample(StandardNormal))
}

#[test]
fn learns_a_linear_target() {
    let x = gaussian(4, 64, 1);
    let z = gaussian(2, 4, 2) * &x;
    let cfg = NseConfig { hidden: 16, gamma: 0.0, epochs: 300, batch: 16, lr: 1e-2, ..Default::default() };
    let fit = nse_train(&x, &z, &cfg).unwrap();
    assert_eq!(fit.losses.len(), 301);
    let (first, last) = (fit.losses[0], *fit.losses.last().unwrap());
    assert!(last <= 0.01 * first, "{first} -> {last}");
    assert!((nse_loss(&fit.params, &x, &z, 0.0, Activation::Relu).unwrap() - last).abs() < 1e-12);
}

#[test]
fn huge_ridge_shrinks_weights() {
    let x = gaussian(4, 32, 3);
    let z = gaussian(2, 32, 4);
    let base = NseConfig { hidden: 8, epochs: 1000, batch: 8, lr: 1e-2, ..Default::default() };
    let norms = |p: &MlpParams| p.w1.norm() + p.w2.norm();
    let free = nse_train(&x, &z, &NseConfig { gamma: 0.0, ..base }).unwrap();
    let tied = nse_train(&x, &z, &NseConfig { gamma: 1e6, ..base }).unwrap();
    assert!(norms(&tied.params) <= 1e-3, "{}", norms(&tied.params));
    assert!(norms(&free.params) > 1.0);
}

#[test]
fn training_is_deterministic_per_seed() {
    let x = gaussian(3, 20, 5);
    let z = gaussian(2, 20, 6);
    let cfg = NseConfig { hidden: 6, epochs: 5, batch: 7, ..Default::default() };
    let (a, b) = (nse_train(&x, &z, &cfg).unwrap(), nse_train(&x, &z, &cfg).unwrap());
    assert_eq!(a.params, b.params);
    assert_eq!(a.losses, b.losses);
    let c = nse_train(&x, &z, &NseConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

/// Unit vectors in one subspace whose largest coefficient clears `mu` by
/// `margin`. Outputs scale with that excess, and a small margin lets points
/// near the origin from different blocks pair up under k-means.
fn coherent_points(basis: &DMatrix<f64>, count: usize, mu: f64, margin: f64, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let mut cols = Vec::new();
    while cols.len() < count {
        let v = DVector::from_fn(basis.ncols(), |_, _| r.sample::<f64, _>(StandardNormal)).normalize();
        if v.max() > mu + margin {
            cols.push(basis * v);
        }
    }
    DMatrix::from_columns(&cols)
}

fn max_cross_coherence(bases: &[DMatrix<f64>]) -> f64 {
    let mut mu: f64 = 0.0;
    for (i, bi) in bases.iter().enumerate() {
        for (j, bj) in bases.iter().enumerate() {
            if i != j {
                for l in 0..bi.ncols() {
                    mu = mu.max((bi.column(l).transpose() * bj).norm());
                }
            }
        }
    }
    mu
}

fn constructed_network(bases: &[DMatrix<f64>], mu: f64) -> MlpParams {
    let (k, r, m) = (bases.len(), bases[0].ncols(), bases[0].nrows());
    let mut p = MlpParams::zeros(m, k * r, k);
    for (j, b) in bases.iter().enumerate() {
        p.w1.rows_mut(j * r, r).copy_from(&b.transpose());
        for l in 0..r {
            p.w2[(j, j * r + l)] = 1.0;
        }
    }
    p.b1.fill(-mu);
    p
}

#[test]
fn hand_built_network_separates_independent_subspaces() {
    for (ambient, seed) in [(60, 7u64), (120, 8)] {
        let params = SubspaceParams { ambient_dim: ambient, subspace_dim: 3, clusters: 3, per_cluster: 1, noise_std: 0.0 };
        let bases = generate_synthetic(SyntheticKind::Subspaces(params), seed).unwrap().bases;
        let mu = max_cross_coherence(&bases);
        assert!(mu < 0.9, "coherence {mu} leaves no admissible points");
        let blocks: Vec<DMatrix<f64>> =
            bases.iter().enumerate().map(|(j, b)| coherent_points(b, 40, mu, 0.25, seed * 10 + j as u64)).collect();
        let x = DMatrix::from_columns(&blocks.iter().flat_map(|b| b.column_iter().map(|c| c.into_owned())).collect::<Vec<_>>());
        let truth: Vec<usize> = (0..3).flat_map(|j| std::iter::repeat_n(j, 40)).collect();

        let z = nse_forward(&constructed_network(&bases, mu), &x, Activation::Relu).unwrap();
        for (i, col) in z.column_iter().enumerate() {
            for j in 0..3 {
                if j == truth[i] {
                    assert!(col[j] > 0.0);
                } else {
                    assert!(col[j].abs() < 1e-12, "point {i} leaks {} into block {j}", col[j]);
                }
            }
        }
        let p = kmeans(&z, 3, KMeansOptions::default(), 0).unwrap();
        assert_eq!(brute_accuracy(&p.labels, &truth, 3), 1.0);
    }
}

#[test]
fn cross_coherence_falls_with_ambient_dimension() {
    let mu = |ambient| {
        let p = SubspaceParams { ambient_dim: ambient, subspace_dim: 3, clusters: 3, per_cluster: 1, noise_std: 0.0 };
        let mean: f64 = (0..10)
            .map(|s| max_cross_coherence(&generate_synthetic(SyntheticKind::Subspaces(p), s).unwrap().bases))
            .sum();
        mean / 10.0
    };
    assert!(mu(200) < mu(30));
}

fn landmark_run(act: Activation, seed: u64) -> f64 {
    let p = SubspaceParams { per_cluster: 200, noise_std: 0.01, ..Default::default() };
    let s = generate_synthetic(SyntheticKind::Subspaces(p), seed).unwrap();
    let space = SearchSpace { models: vec![ModelSpec::lsr()], ..SearchSpace::default_grid() };
    let cfg = NseConfig { epochs: 100, activation: act, seed, ..Default::default() };
    let out = eggs_nse(&s.data, 3, &space, SearchMode::Grid, Scoring::default(), 60, &cfg, seed).unwrap();
    assert_eq!(out.partition.len(), 600);
    assert_eq!(out.search.embedding.ncols(), 60);
    brute_accuracy(&out.partition.labels, &s.labels, 3)
}

#[test]
fn landmark_pipeline_clusters_all_points_with_either_activation() {
    let (relu, tanh) = (landmark_run(Activation::Relu, 1), landmark_run(Activation::Tanh, 1));
    assert!(relu >= 0.95);
    assert!(relu >= tanh);
}

#[test]
fn landmark_count_must_fit_between_k_and_n() {
    let s = generate_synthetic(SyntheticKind::Subspaces(SubspaceParams { per_cluster: 10, ..Default::default() }), 0).unwrap();
    let cfg = NseConfig::default();
    let space = SearchSpace::default_grid();
    for bad in [30, 31, 3] {
        let r = eggs_nse(&s.data, 3, &space, SearchMode::Grid, Scoring::default(), bad, &cfg, 0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))), "{bad}");
    }
}
