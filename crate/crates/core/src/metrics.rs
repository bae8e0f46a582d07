//! Clustering quality measures: accuracy under the best label matching, NMI,
//! multiway normalized cut, and the volume-weighted partition distance.

use crate::affinity::AffinityGraph;
use crate::error::{invalid, Result};
use crate::kmeans::Partition;

/// `counts[p][t]` = number of points with predicted label `p` and true label `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(pred: &Partition, truth: &Partition) -> Result<Self> {
        check_same_len(pred, truth)?;
        let mut counts = vec![vec![0usize; truth.k]; pred.k];
        for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
            counts[p][t] += 1;
        }
        Ok(Self { counts })
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn check_same_len(a: &Partition, b: &Partition) -> Result<()> {
    if a.len() != b.len() {
        return Err(invalid(format!("partitions have different sizes: {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials). Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a sentinel column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if !used[col] {
                    let cur = cost[r0 - 1][col - 1] - u[r0] - v[col];
                    if cur < minv[col] {
                        minv[col] = cur;
                        way[col] = col0;
                    }
                    if minv[col] < delta {
                        delta = minv[col];
                        col1 = col;
                    }
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[owner[col]] += delta;
                    v[col] -= delta;
                } else {
                    minv[col] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            owner[col0] = owner[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for col in 1..=n {
        if owner[col] > 0 {
            assignment[owner[col] - 1] = col - 1;
        }
    }
    assignment
}

/// Fraction of points matched under the best one-to-one label mapping.
/// Unequal cluster counts are handled by padding with empty clusters.
pub fn clustering_accuracy(pred: &Partition, truth: &Partition) -> Result<f64> {
    let conf = ConfusionMatrix::new(pred, truth)?;
    let n = pred.len();
    if n == 0 {
        return Err(invalid("accuracy of an empty partition"));
    }
    let size = pred.k.max(truth.k);
    let count = |p: usize, t: usize| -> usize {
        if p < pred.k && t < truth.k {
            conf.counts[p][t]
        } else {
            0
        }
    };
    let cost: Vec<Vec<f64>> = (0..size)
        .map(|p| (0..size).map(|t| (n - count(p, t)) as f64).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let matched: usize = assignment.iter().enumerate().map(|(p, &t)| count(p, t)).sum();
    Ok(matched as f64 / n as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the geometric mean of the entropies
/// (natural log). Two single-cluster partitions score 1.
pub fn nmi(pred: &Partition, truth: &Partition) -> Result<f64> {
    let conf = ConfusionMatrix::new(pred, truth)?;
    let n = pred.len() as f64;
    if pred.is_empty() {
        return Err(invalid("nmi of an empty partition"));
    }
    let row: Vec<usize> = conf.counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<usize> = (0..truth.k).map(|t| conf.counts.iter().map(|r| r[t]).sum()).collect();
    let hp = entropy(row.iter().copied(), n);
    let ht = entropy(col.iter().copied(), n);
    if hp == 0.0 && ht == 0.0 {
        return Ok(1.0);
    }
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (p, r) in conf.counts.iter().enumerate() {
        for (t, &c) in r.iter().enumerate() {
            if c > 0 {
                let joint = c as f64 / n;
                mi += joint * (joint * n * n / (row[p] as f64 * col[t] as f64)).ln();
            }
        }
    }
    Ok((mi / (hp * ht).sqrt()).clamp(0.0, 1.0))
}

fn check_graph(p: &Partition, g: &AffinityGraph) -> Result<()> {
    if p.len() != g.len() {
        return Err(invalid(format!("partition has {} points but graph has {}", p.len(), g.len())));
    }
    Ok(())
}

fn volumes(p: &Partition, g: &AffinityGraph) -> Vec<f64> {
    let mut vol = vec![0.0; p.k];
    for (&l, &d) in p.labels.iter().zip(&g.degrees) {
        vol[l] += d;
    }
    vol
}

/// `Σᵢ Cut(Cᵢ, V∖Cᵢ) / Vol(Cᵢ)`
pub fn mncut(p: &Partition, g: &AffinityGraph) -> Result<f64> {
    check_graph(p, g)?;
    if let Some(empty) = p.sizes().iter().position(|&s| s == 0) {
        return Err(invalid(format!("block {empty} is empty")));
    }
    let vol = volumes(p, g);
    let mut cut = vec![0.0; p.k];
    for &(i, j, w) in g.adjacency.triplets() {
        let (a, b) = (p.labels[i], p.labels[j]);
        if a != b {
            cut[a] += w;
            cut[b] += w;
        }
    }
    Ok(cut.iter().zip(&vol).map(|(c, v)| c / v).sum())
}

/// `1 − (1/k) Σᵢⱼ Vol(Cᵢ ∩ C′ⱼ)² / (Vol(Cᵢ) Vol(C′ⱼ))`
pub fn partition_distance(a: &Partition, b: &Partition, g: &AffinityGraph) -> Result<f64> {
    check_graph(a, g)?;
    check_same_len(a, b)?;
    if a.k != b.k {
        return Err(invalid(format!("block counts differ: {} vs {}", a.k, b.k)));
    }
    let (va, vb) = (volumes(a, g), volumes(b, g));
    if va.iter().chain(&vb).any(|&v| v <= 0.0) {
        return Err(invalid("every block needs positive volume"));
    }
    let mut inter = vec![vec![0.0; b.k]; a.k];
    for ((&la, &lb), &d) in a.labels.iter().zip(&b.labels).zip(&g.degrees) {
        inter[la][lb] += d;
    }
    let mut total = 0.0;
    for (i, row) in inter.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            total += v * v / (va[i] * vb[j]);
        }
    }
    Ok(1.0 - total / a.k as f64)
}
