//! Graph ingestion, mutual-kNN construction, edge splitting and negative
//! sampling.

mod io;
mod knn;
mod split;

pub use io::{
    l2_normalize_rows, load_attributes, load_edge_list, load_edge_list_sized, load_labels,
    read_edge_pairs, read_matrix_csv, write_edge_list, write_matrix_csv, IngestReport,
};
pub use knn::build_mutual_knn;
pub use split::{
    read_split, sample_negatives, sample_negatives_with, split_edges, write_split, EdgeSplit,
    SplitFractions,
};

use ndarray::Array2;

use crate::{Error, Result};

/// Undirected simple graph with optional node attributes.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted. Neighbor lists
/// are sorted too, so membership is a binary search.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    attributes: Option<Array2<f64>>,
}

impl Graph {
    /// Builds a graph from already clean pairs. Self-loops, duplicates (in
    /// either orientation) and out-of-range endpoints are contract errors;
    /// use [`Graph::from_pairs_lenient`] to drop them instead.
    pub fn new(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let (g, report) = Self::from_pairs_lenient(num_nodes, pairs)?;
        if report.self_loops > 0 || report.duplicates > 0 {
            return Err(Error::contract(format!(
                "edge list has {} self-loops and {} duplicates",
                report.self_loops, report.duplicates
            )));
        }
        Ok(g)
    }

    /// Builds a graph, dropping self-loops and duplicate pairs and counting
    /// them. Out-of-range endpoints are still an error.
    pub fn from_pairs_lenient(
        num_nodes: usize,
        pairs: &[(usize, usize)],
    ) -> Result<(Self, IngestReport)> {
        let mut report = IngestReport::default();
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::contract(format!(
                    "edge ({a}, {b}) out of range for {num_nodes} nodes"
                )));
            }
            if a == b {
                report.self_loops += 1;
                continue;
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        report.duplicates = before - edges.len();
        let mut neighbors = vec![Vec::new(); num_nodes];
        for &(a, b) in &edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        let g = Graph {
            num_nodes,
            edges,
            neighbors,
            attributes: None,
        };
        Ok((g, report))
    }

    /// Attaches an `N × d` attribute matrix.
    pub fn with_attributes(mut self, x: Array2<f64>) -> Result<Self> {
        if x.nrows() != self.num_nodes {
            return Err(Error::contract(format!(
                "attribute matrix has {} rows, graph has {} nodes",
                x.nrows(),
                self.num_nodes
            )));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let row = pos / x.ncols().max(1);
            return Err(Error::contract(format!(
                "attribute row {row} is not finite"
            )));
        }
        self.attributes = Some(x);
        Ok(self)
    }

    /// Same nodes and attributes, different edge set.
    pub fn with_edges(&self, pairs: &[(usize, usize)]) -> Result<Self> {
        let g = Graph::new(self.num_nodes, pairs)?;
        Ok(Graph {
            attributes: self.attributes.clone(),
            ..g
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.num_nodes && self.neighbors[a].binary_search(&b).is_ok()
    }

    pub fn attributes(&self) -> Option<&Array2<f64>> {
        self.attributes.as_ref()
    }

    /// Attributes, or the identity matrix when the graph has none.
    pub fn features_or_identity(&self) -> Array2<f64> {
        match &self.attributes {
            Some(x) => x.clone(),
            None => Array2::eye(self.num_nodes),
        }
    }

    /// Number of unordered non-adjacent pairs of distinct nodes.
    pub fn num_non_edges(&self) -> usize {
        let n = self.num_nodes;
        n * n.saturating_sub(1) / 2 - self.edges.len()
    }
}
