//! k-means in tangent coordinates and clustering agreement metrics.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::Serialize;

use crate::{par, rng, Error, Result};

pub const KMEANS_RESTARTS: usize = 20;
const MAX_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centroids(x: &ArrayView2<f64>, k: usize, r: &mut rng::StreamRng) -> Array2<f64> {
    let n = x.nrows();
    let mut centroids = Array2::zeros((k, x.ncols()));
    let first = r.random_range(0..n);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = r.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            r.random_range(0..n)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    centroids
}

fn nearest(x: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(x: &ArrayView2<f64>, k: usize, r: &mut rng::StreamRng) -> KMeansResult {
    let (n, d) = x.dim();
    let mut centroids = seed_centroids(x, k, r);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..MAX_ITERS {
        let assigned: Vec<(usize, f64)> = (0..n).map(|i| nearest(x.row(i), &centroids)).collect();
        let new_labels: Vec<usize> = assigned.iter().map(|a| a.0).collect();
        if new_labels == labels {
            break;
        }
        labels = new_labels;
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            sums.row_mut(l).scaled_add(1.0, &x.row(i));
            counts[l] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids.row_mut(c).assign(&(&sums.row(c) / count as f64));
            } else {
                // re-seed an empty cluster at the point farthest from its centroid
                let far = (0..n)
                    .max_by(|&a, &b| assigned[a].1.total_cmp(&assigned[b].1).then(b.cmp(&a)))
                    .expect("n > 0");
                centroids.row_mut(c).assign(&x.row(far));
            }
        }
    }
    let inertia = (0..n)
        .map(|i| sq_dist(x.row(i), centroids.row(labels[i])))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
    }
}

/// k-means with k-means++ seeding, [`KMEANS_RESTARTS`] restarts run in
/// parallel, the lowest inertia kept (earliest restart on ties).
pub fn kmeans(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<KMeansResult> {
    kmeans_with_restarts(x, k, seed, KMEANS_RESTARTS)
}

pub fn kmeans_with_restarts(
    x: ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    if k == 0 || k > x.nrows() {
        return Err(Error::contract(format!(
            "k-means needs 1 <= k <= N (k={k}, N={})",
            x.nrows()
        )));
    }
    if restarts == 0 {
        return Err(Error::contract("k-means needs at least one restart"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("k-means input is not finite"));
    }
    let runs = par::map_tasks(restarts, |i| {
        lloyd(&x, k, &mut rng::indexed_stream(seed, "kmeans", i as u64))
    });
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("at least one restart"))
}

/// Maximum-weight perfect matching on a square matrix (Hungarian method
/// with potentials, O(n³)). Returns `assign[row] = column`.
pub fn max_weight_assignment(w: &[Vec<i64>]) -> Vec<usize> {
    let n = w.len();
    if n == 0 {
        return Vec::new();
    }
    // minimise cost = -w; 1-based arrays with a sentinel column 0
    let cost = |i: usize, j: usize| -w[i - 1][j - 1];
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        assign[p[j] - 1] = j - 1;
    }
    assign
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringMetrics {
    pub acc: f64,
    pub nmi: f64,
    pub ari: f64,
}

/// Dense relabelling of arbitrary label values, in order of first appearance.
fn compact(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Contingency counts `table[pred][truth]`.
fn contingency(pred: &[usize], truth: &[usize]) -> Vec<Vec<u64>> {
    let (p, kp) = compact(pred);
    let (t, kt) = compact(truth);
    let mut table = vec![vec![0u64; kt]; kp];
    for (a, b) in p.into_iter().zip(t) {
        table[a][b] += 1;
    }
    table
}

/// Sum in a canonical order, so permuting the terms never changes the result.
fn canonical_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    canonical_sum(
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .collect(),
    )
}

fn comb2(x: u64) -> u128 {
    let x = x as u128;
    x * x.saturating_sub(1) / 2
}

/// ACC (Hungarian assignment), NMI (arithmetic-mean normalisation) and ARI.
pub fn clustering_metrics(pred: &[usize], truth: &[usize]) -> Result<ClusteringMetrics> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::contract(format!(
            "clustering metrics need equal nonempty lengths ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len();
    let nf = n as f64;
    let table = contingency(pred, truth);
    let (kp, kt) = (table.len(), table[0].len());

    let size = kp.max(kt);
    let mut w = vec![vec![0i64; size]; size];
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            w[i][j] = c as i64;
        }
    }
    let assign = max_weight_assignment(&w);
    let matched: i64 = assign.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
    let acc = matched as f64 / nf;

    let row_sums: Vec<u64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<u64> = (0..kt).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let hp = entropy(&row_sums, nf);
    let ht = entropy(&col_sums, nf);
    let mut mi_terms = Vec::new();
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi_terms.push(c / nf * (nf * c / (row_sums[i] as f64 * col_sums[j] as f64)).ln());
            }
        }
    }
    let mi = canonical_sum(mi_terms).max(0.0);
    let nmi = if hp == 0.0 && ht == 0.0 {
        1.0
    } else {
        (mi / ((hp + ht) / 2.0)).min(1.0)
    };

    let sum_cells: u128 = table.iter().flatten().map(|&c| comb2(c)).sum();
    let sum_rows: u128 = row_sums.iter().map(|&c| comb2(c)).sum();
    let sum_cols: u128 = col_sums.iter().map(|&c| comb2(c)).sum();
    let total = comb2(n as u64) as f64;
    let expected = sum_rows as f64 * sum_cols as f64 / total.max(1.0);
    let max_index = (sum_rows + sum_cols) as f64 / 2.0;
    let ari = if max_index == expected {
        1.0
    } else {
        (sum_cells as f64 - expected) / (max_index - expected)
    };
    Ok(ClusteringMetrics { acc, nmi, ari })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let mut r = rng::stream(1, "hungarian-test");
        for n in 1..=6 {
            for _ in 0..20 {
                let w: Vec<Vec<i64>> = (0..n)
                    .map(|_| (0..n).map(|_| r.random_range(-5..20)).collect())
                    .collect();
                let a = max_weight_assignment(&w);
                let got: i64 = a.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
                let best = permutations(n)
                    .iter()
                    .map(|p| p.iter().enumerate().map(|(i, &j)| w[i][j]).sum::<i64>())
                    .max()
                    .unwrap();
                assert_eq!(got, best);
                let mut cols = a.clone();
                cols.sort_unstable();
                assert_eq!(cols, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn relabelled_perfect_clustering() {
        let m = clustering_metrics(&[1, 1, 0, 0], &[0, 0, 1, 1]).unwrap();
        assert_eq!((m.acc, m.nmi, m.ari), (1.0, 1.0, 1.0));
        let m = clustering_metrics(&[3, 0, 2, 2, 0], &[3, 0, 2, 2, 0]).unwrap();
        assert_eq!((m.acc, m.nmi, m.ari), (1.0, 1.0, 1.0));
    }

    #[test]
    fn independent_two_by_two() {
        // every cell of the contingency table holds one item
        let m = clustering_metrics(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(m.acc, 0.5);
        assert!(m.nmi.abs() < 1e-15);
        assert!(m.ari <= 0.0);
        // pair counts: cells 0, rows 2, cols 2, all 6 → (0 - 2·2/6) / (2 - 2·2/6) = -0.5
        assert!((m.ari + 0.5).abs() < 1e-15);
    }

    #[test]
    fn nmi_hand_example() {
        // pred {0,0,0,1}, truth {0,0,1,1}
        let m = clustering_metrics(&[0, 0, 0, 1], &[0, 0, 1, 1]).unwrap();
        let ln = f64::ln;
        let hp = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
        let ht = ln(2.0);
        let mi = 0.5 * ln(0.5 / (0.75 * 0.5))
            + 0.25 * ln(0.25 / (0.75 * 0.5))
            + 0.25 * ln(0.25 / (0.25 * 0.5));
        assert!((m.nmi - mi / ((hp + ht) / 2.0)).abs() < 1e-12);
        assert_eq!(m.acc, 0.75);
    }

    #[test]
    fn length_mismatch() {
        assert!(clustering_metrics(&[0, 1], &[0]).is_err());
        assert!(clustering_metrics(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_label_renaming(
            pred in proptest::collection::vec(0usize..5, 1..40),
            truth_seed in 0u64..1000,
            rename_seed in 0u64..1000,
        ) {
            let mut r = rng::stream(truth_seed, "truth");
            let truth: Vec<usize> = pred.iter().map(|_| r.random_range(0..4)).collect();
            let mut names: Vec<usize> = (0..5).map(|i| i * 7 + 3).collect();
            use rand::seq::SliceRandom;
            names.shuffle(&mut rng::stream(rename_seed, "rename"));
            let renamed: Vec<usize> = pred.iter().map(|&l| names[l]).collect();
            let a = clustering_metrics(&pred, &truth).unwrap();
            let b = clustering_metrics(&renamed, &truth).unwrap();
            prop_assert_eq!(a.nmi, b.nmi);
            prop_assert_eq!(a.ari, b.ari);
            prop_assert_eq!(a.acc, b.acc);
            // Hungarian ACC is at least that of the identity mapping
            let identity = pred.iter().zip(&truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64;
            prop_assert!(a.acc >= identity - 1e-15);
        }
    }

    #[test]
    fn separated_groups_are_recovered() {
        let x = array![
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [10.0, 10.0],
            [10.1, 10.0],
            [10.0, 9.9]
        ];
        let res = kmeans(x.view(), 2, 3).unwrap();
        assert_eq!(res.labels[0], res.labels[1]);
        assert_eq!(res.labels[0], res.labels[2]);
        assert_eq!(res.labels[3], res.labels[4]);
        assert_eq!(res.labels[3], res.labels[5]);
        assert_ne!(res.labels[0], res.labels[3]);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let x = array![[0.0, 1.0], [2.0, 3.0], [4.0, -1.0], [0.5, 0.5]];
        assert_eq!(kmeans(x.view(), 4, 0).unwrap().inertia, 0.0);
    }

    #[test]
    fn seeded_and_validated() {
        let mut r = rng::stream(2, "pts");
        let x = Array2::from_shape_fn((60, 3), |_| r.random_range(-1.0..1.0));
        let a = kmeans(x.view(), 4, 9).unwrap();
        let b = kmeans(x.view(), 4, 9).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(x.view(), 61, 0).is_err());
        assert!(kmeans(x.view(), 0, 0).is_err());
    }

    #[test]
    fn best_restart_is_no_worse_than_any_single_run() {
        let mut r = rng::stream(4, "pts");
        let x = Array2::from_shape_fn((80, 2), |_| r.random_range(-1.0..1.0));
        let best = kmeans(x.view(), 5, 1).unwrap();
        for i in 0..KMEANS_RESTARTS {
            let single = lloyd(
                &x.view(),
                5,
                &mut rng::indexed_stream(1, "kmeans", i as u64),
            );
            assert!(best.inertia <= single.inertia);
        }
    }
}
