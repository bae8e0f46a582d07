//! Closed forms, sparsification and the eigen/SVD kernels against dense oracles.

mod common;

use common::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use specsearch::affinity::*;
use specsearch::linalg::{partial_sym_eigs, randomized_svd, SparseSymMatrix};

fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    DMatrix::from_fn(m, n, |_, _| r.sample(StandardNormal))
}

/// `(XᵀX + λI)⁻¹XᵀX` with the Gram matrix built entry by entry and an LU solve.
fn normal_equations(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = x.ncols();
    let g = DMatrix::from_fn(n, n, |i, j| (0..x.nrows()).map(|r| x[(r, i)] * x[(r, j)]).sum::<f64>());
    let sys = &g + DMatrix::identity(n, n) * lambda;
    sys.lu().solve(&g).unwrap()
}

#[test]
fn lsr_matches_normal_equations_and_both_gram_sides_agree() {
    let mut r = rng(21);
    for seed in 0..50 {
        let (m, n) = (r.random_range(2..=40), r.random_range(2..=40));
        let lambda = 10f64.powf(r.random_range(-2.0..1.0));
        let x = gaussian(m, n, seed);
        let oracle = normal_equations(&x, lambda);
        assert!((lsr_coefficients(&x, lambda).unwrap() - &oracle).amax() < 1e-8);
        let (p, d) = (lsr_primal(&x, lambda).unwrap(), lsr_dual(&x, lambda).unwrap());
        assert!((p - d).amax() < 1e-8, "m {m} n {n} lambda {lambda}");
    }
}

#[test]
fn lsr_rejects_nonpositive_ridge() {
    let x = gaussian(3, 4, 0);
    assert!(lsr_coefficients(&x, 0.0).is_err());
    assert!(lsr_coefficients(&x, -1.0).is_err());
}

#[test]
fn kernel_matrices_match_pairwise_formulas() {
    let x = gaussian(4, 9, 22);
    let n = x.ncols();
    let dist = |i: usize, j: usize| (x.column(i) - x.column(j)).norm();
    let mean: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).sum::<f64>() / (n * n) as f64;
    let bw = 0.7 * mean;
    let k = kernel_matrix(&x, KernelSpec::Gaussian { xi: 0.7 }).unwrap();
    let p = kernel_matrix(&x, KernelSpec::Polynomial { offset: 2.0, degree: 3 }).unwrap();
    for i in 0..n {
        for j in 0..n {
            let g = (-dist(i, j).powi(2) / (2.0 * bw * bw)).exp();
            assert!((k[(i, j)] - g).abs() < 1e-12);
            assert!((p[(i, j)] - (x.column(i).dot(&x.column(j)) + 2.0).powi(3)).abs() < 1e-9);
        }
    }
}

#[test]
fn low_rank_klsr_is_exact_on_low_rank_kernels() {
    let f = gaussian(60, 4, 23);
    let k = &f * f.transpose();
    let exact = klsr_coefficients(&k, 0.5, None, 0).unwrap();
    let approx = klsr_coefficients(&k, 0.5, Some(8), 3).unwrap();
    assert!((exact - approx).amax() < 1e-8);
}

#[test]
fn randomized_svd_recovers_low_rank_matrices() {
    let m = gaussian(50, 5, 24) * gaussian(5, 30, 25);
    let f = randomized_svd(&m, 5, 10, 2, 7).unwrap();
    assert!((f.reconstruct() - &m).amax() < 1e-9 * m.amax());
    let s = m.clone().singular_values();
    for (a, b) in f.s.iter().zip(s.iter()) {
        assert!((a - b).abs() < 1e-9 * s[0]);
    }
}

fn random_sym(n: usize, density: f64, seed: u64) -> SparseSymMatrix {
    let mut r = rng(seed);
    let mut trips = Vec::new();
    for i in 0..n {
        for j in i..n {
            if r.random::<f64>() < density {
                trips.push((i, j, r.random_range(-1.0..1.0)));
            }
        }
    }
    SparseSymMatrix::from_triplets(n, trips).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lanczos_matches_dense_eigensolver(n in 5usize..60, count in 1usize..5, seed in any::<u64>()) {
        let count = count.min(n);
        let m = random_sym(n, 0.3, seed);
        let pairs = partial_sym_eigs(&m, count, seed).unwrap();
        let mut dense: Vec<f64> = SymmetricEigen::new(m.to_dense()).eigenvalues.iter().copied().collect();
        dense.sort_by(|a, b| b.total_cmp(a));
        let scale = m.norm_inf().max(1.0);
        for (i, &v) in pairs.values.iter().enumerate() {
            prop_assert!((v - dense[i]).abs() < 1e-8 * scale, "{} vs {}", v, dense[i]);
            let col = pairs.vectors.column(i);
            prop_assert!((m.to_dense() * col - col * v).norm() < 1e-7 * scale);
        }
    }

    #[test]
    fn truncation_keeps_tau_normalized_offdiagonal_entries(n in 3usize..25, tau in 1usize..30, seed in any::<u64>()) {
        let c = gaussian(n, n, seed);
        let cols = truncated_columns(&c, tau).unwrap();
        for (j, col) in cols.iter().enumerate() {
            prop_assert!(col.len() <= tau.min(n - 1));
            prop_assert!(col.iter().all(|&(i, w)| i != j && w > 0.0));
            prop_assert!((col.iter().map(|&(_, w)| w).sum::<f64>() - 1.0).abs() < 1e-12);
            // kept entries dominate dropped ones
            let smallest = col.iter().map(|&(i, _)| c[(i, j)].abs()).fold(f64::INFINITY, f64::min);
            let kept: Vec<usize> = col.iter().map(|&(i, _)| i).collect();
            for i in (0..n).filter(|&i| i != j && !kept.contains(&i)) {
                prop_assert!(c[(i, j)].abs() <= smallest);
            }
        }
    }

    #[test]
    fn affinity_is_symmetric_nonnegative_with_empty_diagonal(n in 3usize..25, tau in 1usize..10, seed in any::<u64>()) {
        let g = postprocess_affinity(&gaussian(n, n, seed), tau).unwrap();
        let a = g.adjacency.to_dense();
        prop_assert_eq!(&a, &a.transpose());
        prop_assert!(a.iter().all(|&v| v >= 0.0));
        prop_assert!((0..n).all(|i| a[(i, i)] == 0.0));
        // each column contributes half its unit mass to both triangles
        prop_assert!((a.sum() - n as f64).abs() < 1e-9);
        for i in 0..n {
            prop_assert!((a.row(i).sum() - g.degrees[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn lsr_primal_equals_dual(m in 2usize..30, n in 2usize..30, lambda in 1e-2f64..10.0, seed in any::<u64>()) {
        let x = gaussian(m, n, seed);
        prop_assert!((lsr_primal(&x, lambda).unwrap() - lsr_dual(&x, lambda).unwrap()).amax() < 1e-8);
    }
}
