//! Link-prediction edge splits and negative sampling.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use super::io::{read_edge_pairs, write_edge_list};
use super::Graph;
use crate::rng::{self, StreamRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.85,
            val: 0.05,
            test: 0.10,
        }
    }
}

/// Disjoint train/validation/test positives, each with one negative per
/// positive. All pairs are stored as `(i, j)` with `i < j`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub num_nodes: usize,
    pub train: Vec<(usize, usize)>,
    pub val: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
    pub train_neg: Vec<(usize, usize)>,
    pub val_neg: Vec<(usize, usize)>,
    pub test_neg: Vec<(usize, usize)>,
}

impl EdgeSplit {
    /// The graph seen during training: all nodes, training edges only.
    pub fn train_graph(&self, full: &Graph) -> Result<Graph> {
        full.with_edges(&self.train)
    }

    /// Validation and test negatives; excluded when resampling training negatives.
    pub fn held_out_negatives(&self) -> HashSet<(usize, usize)> {
        self.val_neg.iter().chain(&self.test_neg).copied().collect()
    }
}

fn canonical((a, b): (usize, usize)) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Splits the edges of `graph` with counts `round(f · |E|)` for validation and
/// test and the remainder for training, then draws one negative per positive.
/// Negatives of different splits are disjoint.
pub fn split_edges(graph: &Graph, fractions: SplitFractions, seed: u64) -> Result<EdgeSplit> {
    let SplitFractions { train, val, test } = fractions;
    if [train, val, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + val + test - 1.0).abs() > 1e-9
    {
        return Err(Error::contract(format!(
            "split fractions must be in [0, 1] and sum to 1, got {train}/{val}/{test}"
        )));
    }
    let e = graph.num_edges();
    let n_val = (val * e as f64).round() as usize;
    let n_test = (test * e as f64).round() as usize;
    let n_train = e.saturating_sub(n_val + n_test);
    if n_val == 0 || n_test == 0 || n_train == 0 {
        return Err(Error::contract(format!(
            "{e} edges are too few for nonempty splits ({n_train}/{n_val}/{n_test})"
        )));
    }
    if graph.num_non_edges() < e {
        return Err(Error::contract(format!(
            "graph too dense: {} non-edges for {e} negatives",
            graph.num_non_edges()
        )));
    }

    let mut r = rng::stream(seed, "split");
    let mut edges = graph.edges().to_vec();
    edges.shuffle(&mut r);
    let mut val_pos = edges[..n_val].to_vec();
    let mut test_pos = edges[n_val..n_val + n_test].to_vec();
    let mut train_pos = edges[n_val + n_test..].to_vec();
    val_pos.sort_unstable();
    test_pos.sort_unstable();
    train_pos.sort_unstable();

    let mut taken = HashSet::new();
    let mut draw = |count: usize, r: &mut StreamRng| -> Result<Vec<(usize, usize)>> {
        let mut neg = sample_negatives_with(graph, count, &taken, r)?;
        taken.extend(neg.iter().copied());
        neg.sort_unstable();
        Ok(neg)
    };
    let val_neg = draw(n_val, &mut r)?;
    let test_neg = draw(n_test, &mut r)?;
    let train_neg = draw(n_train, &mut r)?;
    Ok(EdgeSplit {
        num_nodes: graph.num_nodes(),
        train: train_pos,
        val: val_pos,
        test: test_pos,
        train_neg,
        val_neg,
        test_neg,
    })
}

/// [`sample_negatives_with`] on the named sub-stream of `seed`.
pub fn sample_negatives(
    graph: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    sample_negatives_with(graph, count, exclude, &mut rng::stream(seed, "negatives"))
}

/// Draws `count` distinct unordered pairs uniformly from the pairs that are
/// not edges of `graph`, not self-loops and not in `exclude` (either
/// orientation). Pairs are returned as `(i, j)` with `i < j` in draw order.
pub fn sample_negatives_with(
    graph: &Graph,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    r: &mut StreamRng,
) -> Result<Vec<(usize, usize)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = graph.num_nodes();
    let blocked = |p: (usize, usize)| {
        graph.has_edge(p.0, p.1) || exclude.contains(&p) || exclude.contains(&(p.1, p.0))
    };
    let excluded_non_edges: HashSet<(usize, usize)> = exclude
        .iter()
        .map(|&p| canonical(p))
        .filter(|&(a, b)| a != b && b < n && !graph.has_edge(a, b))
        .collect();
    let available = graph.num_non_edges() - excluded_non_edges.len();
    if count > available {
        return Err(Error::contract(format!(
            "requested {count} negatives, only {available} non-edges available"
        )));
    }

    if count * 2 <= available {
        // Rejection sampling: each accepted draw is uniform over what is left.
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = r.random_range(0..n);
            let b = r.random_range(0..n);
            if a == b {
                continue;
            }
            let p = canonical((a, b));
            if !blocked(p) && seen.insert(p) {
                out.push(p);
            }
        }
        Ok(out)
    } else {
        let mut pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter(|&p| !blocked(p))
            .collect();
        let (chosen, _) = pool.partial_shuffle(r, count);
        Ok(chosen.to_vec())
    }
}

const SPLIT_FILES: [&str; 6] = [
    "train.txt",
    "val.txt",
    "test.txt",
    "train_neg.txt",
    "val_neg.txt",
    "test_neg.txt",
];

/// Writes the six pair lists of a split into `dir`, plus `num_nodes.txt`.
pub fn write_split(dir: &Path, split: &EdgeSplit) -> Result<()> {
    let lists = [
        &split.train,
        &split.val,
        &split.test,
        &split.train_neg,
        &split.val_neg,
        &split.test_neg,
    ];
    for (name, list) in SPLIT_FILES.iter().zip(lists) {
        write_edge_list(&dir.join(name), list)?;
    }
    let p = dir.join("num_nodes.txt");
    std::fs::write(&p, format!("{}\n", split.num_nodes)).map_err(|e| Error::io(p, e))
}

/// Reads a split written by [`write_split`].
pub fn read_split(dir: &Path) -> Result<EdgeSplit> {
    let p = dir.join("num_nodes.txt");
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let n: usize = text.trim().parse().map_err(|_| Error::Parse {
        path: p.clone(),
        line: 1,
        msg: format!("invalid node count {:?}", text.trim()),
    })?;
    let mut lists = Vec::with_capacity(6);
    for name in SPLIT_FILES {
        let mut l: Vec<(usize, usize)> = read_edge_pairs(&dir.join(name), Some(n))?
            .into_iter()
            .map(canonical)
            .collect();
        l.sort_unstable();
        lists.push(l);
    }
    let mut it = lists.into_iter();
    let mut next = || it.next().expect("six lists");
    Ok(EdgeSplit {
        num_nodes: n,
        train: next(),
        val: next(),
        test: next(),
        train_neg: next(),
        val_neg: next(),
        test_neg: next(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, extra: usize) -> Graph {
        let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        pairs.extend((0..extra).map(|i| (i, (i + n / 2) % n)));
        Graph::from_pairs_lenient(n, &pairs).unwrap().0
    }

    #[test]
    fn counts_follow_rounding_rule() {
        let g = ring(100, 0);
        let s = split_edges(&g, SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (85, 5, 10));
        let g = ring(20, 0);
        let s = split_edges(&g, SplitFractions::default(), 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (17, 1, 2));
        assert_eq!(s.val_neg.len(), 1);
        assert_eq!(s.test_neg.len(), 2);
        assert_eq!(s.train_neg.len(), 17);
    }

    #[test]
    fn split_is_a_partition_with_valid_negatives() {
        let g = ring(60, 25);
        let s = split_edges(&g, SplitFractions::default(), 3).unwrap();
        let mut all: Vec<_> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, g.edges());
        let negs: Vec<_> = s
            .train_neg
            .iter()
            .chain(&s.val_neg)
            .chain(&s.test_neg)
            .collect();
        let distinct: HashSet<_> = negs.iter().collect();
        assert_eq!(distinct.len(), negs.len());
        assert!(negs.iter().all(|&&(a, b)| a < b && !g.has_edge(a, b)));
        // leakage: the training graph contains no held-out positive
        let tg = s.train_graph(&g).unwrap();
        assert!(s
            .val
            .iter()
            .chain(&s.test)
            .all(|&(a, b)| !tg.has_edge(a, b)));
    }

    #[test]
    fn split_is_deterministic() {
        let g = ring(50, 10);
        let a = split_edges(&g, SplitFractions::default(), 7).unwrap();
        let b = split_edges(&g, SplitFractions::default(), 7).unwrap();
        let c = split_edges(&g, SplitFractions::default(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_errors() {
        let g = ring(5, 0);
        assert!(split_edges(&g, SplitFractions::default(), 0).is_err());
        let bad = SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.2,
        };
        assert!(split_edges(&ring(100, 0), bad, 0).is_err());
        let complete: Vec<_> = (0..25)
            .flat_map(|a| (a + 1..25).map(move |b| (a, b)))
            .collect();
        let dense = Graph::new(25, &complete).unwrap();
        assert!(split_edges(&dense, SplitFractions::default(), 0).is_err());
    }

    #[test]
    fn forced_and_empty_negatives() {
        let mut pairs: Vec<_> = (0..5)
            .flat_map(|a| (a + 1..5).map(move |b| (a, b)))
            .collect();
        pairs.retain(|&p| p != (1, 3));
        let g = Graph::new(5, &pairs).unwrap();
        assert_eq!(
            sample_negatives(&g, 1, &HashSet::new(), 0).unwrap(),
            vec![(1, 3)]
        );
        assert!(sample_negatives(&g, 0, &HashSet::new(), 0)
            .unwrap()
            .is_empty());
        assert!(sample_negatives(&g, 2, &HashSet::new(), 0).is_err());
        let ex: HashSet<_> = [(3, 1)].into_iter().collect();
        assert!(sample_negatives(&g, 1, &ex, 0).is_err());
    }

    #[test]
    fn exclusions_are_respected() {
        let g = ring(30, 0);
        let ex: HashSet<_> = (0..30)
            .flat_map(|a| (a + 2..30).map(move |b| (b, a)))
            .take(300)
            .collect();
        let neg = sample_negatives(&g, 50, &ex, 4).unwrap();
        for &(a, b) in &neg {
            assert!(!ex.contains(&(a, b)) && !ex.contains(&(b, a)) && !g.has_edge(a, b) && a != b);
        }
    }

    /// Frequencies over many single draws match the uniform law on the
    /// enumerated non-edges within 3 sigma.
    #[test]
    fn single_draws_are_uniform() {
        let g = Graph::new(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
        let non_edges: Vec<(usize, usize)> = (0..5)
            .flat_map(|a| (a + 1..5).map(move |b| (a, b)))
            .filter(|&(a, b)| !g.has_edge(a, b))
            .collect();
        assert_eq!(non_edges.len(), 6);
        let mut counts = vec![0usize; non_edges.len()];
        let mut r = rng::stream(11, "uniformity");
        let draws = 100_000;
        for _ in 0..draws {
            let p = sample_negatives_with(&g, 1, &HashSet::new(), &mut r).unwrap()[0];
            counts[non_edges.iter().position(|&q| q == p).unwrap()] += 1;
        }
        let prob = 1.0 / non_edges.len() as f64;
        let mean = draws as f64 * prob;
        let sigma = (draws as f64 * prob * (1.0 - prob)).sqrt();
        for c in counts {
            assert!(
                (c as f64 - mean).abs() <= 3.0 * sigma,
                "{c} vs {mean} ± {sigma}"
            );
        }
    }

    #[test]
    fn split_files_round_trip() {
        let g = ring(40, 5);
        let s = split_edges(&g, SplitFractions::default(), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_split(dir.path(), &s).unwrap();
        assert_eq!(read_split(dir.path()).unwrap(), s);
    }
}
