//! k-means++ with restarts, used both on spectral embeddings and on raw data
//! for landmark selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;

/// A hard clustering. Labels are `0..k` (written out as `1..=k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
}

impl Partition {
    /// Wraps labels that are already contiguous in `0..k`.
    pub fn from_labels(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(format!("label {bad} out of range for k = {k}")));
        }
        Ok(Self { labels, k, inertia: 0.0 })
    }

    /// Maps arbitrary integer labels onto `0..k` in ascending label order.
    pub fn from_raw_labels(raw: &[i64]) -> Self {
        let mut distinct: Vec<i64> = raw.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        let labels = raw.iter().map(|l| distinct.binary_search(l).expect("label present")).collect();
        Self { labels, k: distinct.len(), inertia: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { restarts: 10, max_iters: 300, tol: 1e-6 }
    }
}

/// Result of one or more Lloyd runs.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub partition: Partition,
    pub centers: DenseMatrix,
    /// Inertia after each assignment step of the winning run.
    pub trace: Vec<f64>,
}

pub fn kmeans(z: &DenseMatrix, k: usize, opts: KMeansOptions, seed: u64) -> Result<Partition> {
    Ok(kmeans_fit(z, k, opts, seed)?.partition)
}

/// Cluster centers of the best run, one per column.
pub fn kmeans_centers(x: &DenseMatrix, k: usize, seed: u64) -> Result<DenseMatrix> {
    Ok(kmeans_fit(x, k, KMeansOptions::default(), seed)?.centers)
}

/// Best-inertia fit over `opts.restarts` seeded runs. Restart `r` draws from
/// ChaCha stream `r` of `seed`; ties keep the lowest restart index.
pub fn kmeans_fit(z: &DenseMatrix, k: usize, opts: KMeansOptions, seed: u64) -> Result<KMeansFit> {
    let n = z.ncols();
    if k == 0 || k > n {
        return Err(invalid(format!("k-means needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    if opts.restarts == 0 {
        return Err(invalid("k-means needs at least one restart"));
    }
    let runs: Vec<KMeansFit> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            single_run(z, k, opts, &mut rng)
        })
        .collect();
    let mut best: Option<KMeansFit> = None;
    for run in runs {
        if best.as_ref().is_none_or(|b| run.partition.inertia < b.partition.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn col(z: &DenseMatrix, j: usize) -> &[f64] {
    let d = z.nrows();
    &z.as_slice()[j * d..(j + 1) * d]
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding. Indices of the chosen points.
fn plus_plus_seeds(z: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = z.ncols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|j| sq_dist(col(z, j), col(z, chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (j, &d) in dist.iter().enumerate() {
                if d > 0.0 {
                    pick = j;
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|j| !chosen.contains(j)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        let c = col(z, next);
        for (j, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(col(z, j), c));
        }
    }
    chosen
}

/// Nearest center (lowest index on ties) and its squared distance, per point.
fn assign(z: &DenseMatrix, centers: &DenseMatrix) -> Vec<(usize, f64)> {
    let cross = centers.transpose() * z;
    let center_norms: Vec<f64> = centers.column_iter().map(|c| c.norm_squared()).collect();
    (0..z.ncols())
        .into_par_iter()
        .map(|j| {
            let zn = z.column(j).norm_squared();
            let mut best = (0, f64::INFINITY);
            for (c, &cn) in center_norms.iter().enumerate() {
                let d = (zn + cn - 2.0 * cross[(c, j)]).max(0.0);
                if d < best.1 {
                    best = (c, d);
                }
            }
            // exact distance for the winner keeps the inertia free of cancellation error
            (best.0, sq_dist(col(z, j), col(centers, best.0)))
        })
        .collect()
}

fn single_run(z: &DenseMatrix, k: usize, opts: KMeansOptions, rng: &mut ChaCha8Rng) -> KMeansFit {
    let (dim, n) = z.shape();
    let seeds = plus_plus_seeds(z, k, rng);
    let mut centers = z.select_columns(seeds.iter());
    let mut trace = Vec::new();
    let mut assignment = assign(z, &centers);

    for _ in 0..opts.max_iters {
        repair_empty(z, k, &mut centers, &mut assignment);
        trace.push(assignment.iter().map(|a| a.1).sum());

        let mut sums = DenseMatrix::zeros(dim, k);
        let mut counts = vec![0usize; k];
        for (j, &(c, _)) in assignment.iter().enumerate() {
            let mut col = sums.column_mut(c);
            col += z.column(j);
            counts[c] += 1;
        }
        let mut shift = 0.0_f64;
        for (c, &count) in counts.iter().enumerate() {
            let mean = sums.column(c) / count as f64;
            shift = shift.max((&mean - centers.column(c)).norm());
            centers.set_column(c, &mean);
        }
        assignment = assign(z, &centers);
        if shift < opts.tol {
            break;
        }
    }
    repair_empty(z, k, &mut centers, &mut assignment);
    let inertia: f64 = assignment.iter().map(|a| a.1).sum();
    trace.push(inertia);
    let labels = assignment.into_iter().map(|a| a.0).collect();
    debug_assert_eq!(n, z.ncols());
    KMeansFit { partition: Partition { labels, k, inertia }, centers, trace }
}

/// Gives every empty cluster the point farthest from its current center.
fn repair_empty(z: &DenseMatrix, k: usize, centers: &mut DenseMatrix, assignment: &mut [(usize, f64)]) {
    loop {
        let mut counts = vec![0usize; k];
        for a in assignment.iter() {
            counts[a.0] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        for (j, a) in assignment.iter().enumerate() {
            if counts[a.0] > 1 && far.is_none_or(|(_, d)| a.1 > d) {
                far = Some((j, a.1));
            }
        }
        let Some((j, _)) = far else { return };
        centers.set_column(empty, &z.column(j));
        assignment[j] = (empty, 0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, seeded_rng};

    fn blobs(per: usize, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let mut rng = seeded_rng(seed);
        let noise = gaussian_matrix(2, 2 * per, &mut rng) * 0.1;
        let mut x = noise;
        for j in per..2 * per {
            x[(0, j)] += 10.0;
        }
        let truth = (0..2 * per).map(|j| usize::from(j >= per)).collect();
        (x, truth)
    }

    #[test]
    fn separates_two_blobs() {
        let (x, truth) = blobs(30, 1);
        let p = kmeans(&x, 2, KMeansOptions::default(), 0).unwrap();
        let flip = p.labels[0] != truth[0];
        for (l, t) in p.labels.iter().zip(&truth) {
            assert_eq!(*l != *t, flip);
        }
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let mut rng = seeded_rng(2);
        let x = gaussian_matrix(3, 7, &mut rng);
        let fit = kmeans_fit(&x, 7, KMeansOptions::default(), 4).unwrap();
        assert_eq!(fit.partition.inertia, 0.0);
        let mut labels = fit.partition.labels.clone();
        labels.sort();
        assert_eq!(labels, (0..7).collect::<Vec<_>>());
        let centers = kmeans_centers(&x, 7, 4).unwrap();
        for j in 0..7 {
            assert!((0..7).any(|c| (centers.column(c) - x.column(j)).norm() == 0.0));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, _) = blobs(40, 3);
        let a = kmeans(&x, 3, KMeansOptions::default(), 11).unwrap();
        let b = kmeans(&x, 3, KMeansOptions::default(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inertia_never_increases_within_a_run() {
        let mut rng = seeded_rng(5);
        let x = gaussian_matrix(4, 200, &mut rng);
        let fit = kmeans_fit(&x, 6, KMeansOptions { restarts: 1, ..Default::default() }, 2).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} > {}", w[1], w[0]);
        }
    }

    #[test]
    fn restarts_never_worse_than_single_run() {
        let mut rng = seeded_rng(6);
        let x = gaussian_matrix(3, 150, &mut rng);
        let best = kmeans(&x, 5, KMeansOptions::default(), 9).unwrap();
        let single = kmeans(&x, 5, KMeansOptions { restarts: 1, ..Default::default() }, 9).unwrap();
        assert!(best.inertia <= single.inertia);
    }

    #[test]
    fn every_cluster_is_nonempty() {
        // many duplicates force the empty-cluster repair
        let mut data = vec![0.0; 20];
        data.extend([1.0, 1.0, 2.0, 2.0]);
        let x = DenseMatrix::from_column_slice(1, 24, &data);
        let p = kmeans(&x, 3, KMeansOptions::default(), 0).unwrap();
        assert!(p.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn rejects_k_above_n() {
        let x = DenseMatrix::zeros(2, 3);
        assert!(kmeans(&x, 4, KMeansOptions::default(), 0).is_err());
    }

    #[test]
    fn landmark_centers_near_blob_means() {
        let (x, _) = blobs(100, 7);
        let centers = kmeans_centers(&x, 2, 1).unwrap();
        let mut xs: Vec<f64> = centers.row(0).iter().copied().collect();
        xs.sort_by(f64::total_cmp);
        // within-blob std is 0.1 per coordinate
        assert!(xs[0].abs() < 0.3 && (xs[1] - 10.0).abs() < 0.3);
    }

    #[test]
    fn raw_labels_are_compacted() {
        let p = Partition::from_raw_labels(&[7, 3, 7, 9]);
        assert_eq!(p.labels, vec![1, 0, 1, 2]);
        assert_eq!(p.k, 3);
    }
}
