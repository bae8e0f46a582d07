//! Shared oracles and generators for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specsearch::affinity::AffinityGraph;
use specsearch::kmeans::Partition;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric nonnegative weights with zero diagonal and no isolated vertex.
pub fn random_adjacency(n: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < density {
                let w = rng.random_range(0.05..1.0);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    for i in 0..n {
        if a.row(i).sum() == 0.0 {
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            a[(i, j)] = 0.5;
            a[(j, i)] = 0.5;
        }
    }
    a
}

/// Connected random graph: a random spanning path plus random extra edges.
pub fn random_connected(n: usize, density: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut a = random_adjacency(n, density, rng);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    for w in order.windows(2) {
        let v = rng.random_range(0.05..1.0);
        a[(w[0], w[1])] = v;
        a[(w[1], w[0])] = v;
    }
    a
}

/// Block-diagonal matrix of the given blocks.
pub fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        a.view_mut((at, at), b.shape()).copy_from(b);
        at += b.nrows();
    }
    a
}

/// All eigenvalues of `I − D^{-1/2} A D^{-1/2}`, ascending, from a dense solve.
pub fn dense_laplacian_eigs(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let d: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let l = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - a[(i, j)] / (d[i] * d[j]).sqrt()
    });
    let mut v: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

/// Random labels with every block in `0..k` used at least once.
pub fn random_partition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Partition {
    let mut labels: Vec<usize> = (0..n).map(|i| if i < k { i } else { rng.random_range(0..k) }).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    Partition::from_labels(labels, k).unwrap()
}

pub fn graph(a: &DMatrix<f64>) -> AffinityGraph {
    AffinityGraph::from_dense(a).unwrap()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for t in i..=j {
            r[idx[t]] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Accuracy by trying every bijection between predicted and true labels.
pub fn brute_accuracy(pred: &[usize], truth: &[usize], k: usize) -> f64 {
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0;
    loop {
        let hits = pred.iter().zip(truth).filter(|(p, t)| perm[**p] == **t).count();
        best = best.max(hits);
        if !next_permutation(&mut perm) {
            break;
        }
    }
    best as f64 / pred.len() as f64
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).unwrap();
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// NMI from explicit joint and marginal probability tables.
pub fn nmi_oracle(pred: &[usize], truth: &[usize]) -> f64 {
    let n = pred.len() as f64;
    let kp = pred.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; kt]; kp];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1;
    }
    let joint: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|&c| c as f64 / n).collect()).collect();
    let pp: Vec<f64> = counts.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
    let pt: Vec<f64> = (0..kt).map(|t| counts.iter().map(|r| r[t]).sum::<usize>() as f64 / n).collect();
    let h = |v: &[f64]| -> f64 { v.iter().filter(|&&x| x > 0.0).map(|x| -x * x.ln()).sum() };
    let (hp, ht) = (h(&pp), h(&pt));
    if hp == 0.0 && ht == 0.0 {
        return 1.0;
    }
    if hp == 0.0 || ht == 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for p in 0..kp {
        for t in 0..kt {
            if joint[p][t] > 0.0 {
                mi += joint[p][t] * (joint[p][t] / (pp[p] * pt[t])).ln();
            }
        }
    }
    mi / (hp * ht).sqrt()
}

/// `Σᵢ Σ_{j≠i} Cut(Cᵢ, Cⱼ) / Vol(Cᵢ)` by nested loops over vertex pairs.
pub fn mncut_oracle(a: &DMatrix<f64>, labels: &[usize], k: usize) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for ci in 0..k {
        let vol: f64 = (0..n).filter(|&u| labels[u] == ci).map(|u| a.row(u).sum()).sum();
        for cj in (0..k).filter(|&c| c != ci) {
            let mut cut = 0.0;
            for u in (0..n).filter(|&u| labels[u] == ci) {
                for v in (0..n).filter(|&v| labels[v] == cj) {
                    cut += a[(u, v)];
                }
            }
            total += cut / vol;
        }
    }
    total
}

pub fn partition_distance_oracle(a: &DMatrix<f64>, l1: &[usize], l2: &[usize], k: usize) -> f64 {
    let n = a.nrows();
    let deg: Vec<f64> = (0..n).map(|u| a.row(u).sum()).collect();
    let vol = |pred: &dyn Fn(usize) -> bool| -> f64 { (0..n).filter(|&u| pred(u)).map(|u| deg[u]).sum() };
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let both = vol(&|u| l1[u] == i && l2[u] == j);
            total += both * both / (vol(&|u| l1[u] == i) * vol(&|u| l2[u] == j));
        }
    }
    1.0 - total / k as f64
}

/// Directory holding the MNIST IDX files: `$MNIST_DIR`, else `data/mnist`
/// at the workspace root. `None` when the training images are missing.
pub fn mnist_dir() -> Option<std::path::PathBuf> {
    let dir = std::env::var_os("MNIST_DIR")
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    dir.join("train-images-idx3-ubyte").is_file().then_some(dir)
}
