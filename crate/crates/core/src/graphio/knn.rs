//! Mutual k-nearest-neighbor graphs.

use ndarray::ArrayView2;

use super::Graph;
use crate::{par, Error, Result};

/// The `k` nearest rows to row `i` by Euclidean distance, ties to the lower index.
fn nearest(x: &ArrayView2<f64>, i: usize, k: usize) -> Vec<usize> {
    let xi = x.row(i);
    let mut cand: Vec<(f64, usize)> = (0..x.nrows())
        .filter(|&j| j != i)
        .map(|j| {
            let d: f64 = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (d, j)
        })
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, order);
        cand.truncate(k);
    }
    let mut out: Vec<usize> = cand.into_iter().map(|(_, j)| j).collect();
    out.sort_unstable();
    out
}

/// Graph with an edge `(i, j)` iff each of `i`, `j` is among the other's `k`
/// nearest neighbors. Rows are processed in parallel.
pub fn build_mutual_knn(features: ArrayView2<f64>, k: usize) -> Result<Graph> {
    let m = features.nrows();
    if k == 0 || m <= k {
        return Err(Error::contract(format!(
            "mutual kNN needs 1 <= k < M (k={k}, M={m})"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("features contain non-finite values"));
    }
    let nn = par::map_range(m, |i| nearest(&features, i, k));
    let mut pairs = Vec::new();
    for (i, list) in nn.iter().enumerate() {
        for &j in list.iter().filter(|&&j| j > i) {
            if nn[j].binary_search(&i).is_ok() {
                pairs.push((i, j));
            }
        }
    }
    Graph::new(m, &pairs)
}
