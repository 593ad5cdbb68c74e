use crate::{Error, Result};

/// A list of directed node pairs `(src, dst)` with both incidence orders
/// precomputed, so per-node reductions can run row-parallel.
///
/// Edge `e` keeps the position it had in the input; `out_edges(i)` and
/// `in_edges(j)` yield edge positions in increasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    num_nodes: usize,
    src: Vec<usize>,
    dst: Vec<usize>,
    out_order: Vec<usize>,
    out_offsets: Vec<usize>,
    in_order: Vec<usize>,
    in_offsets: Vec<usize>,
}

impl EdgeIndex {
    pub fn new(num_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        if let Some(&(i, j)) = pairs
            .iter()
            .find(|(i, j)| *i >= num_nodes || *j >= num_nodes)
        {
            return Err(Error::contract(format!(
                "edge ({i}, {j}) out of range for {num_nodes} nodes"
            )));
        }
        let src: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let dst: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let (out_order, out_offsets) = bucket(num_nodes, &src);
        let (in_order, in_offsets) = bucket(num_nodes, &dst);
        Ok(EdgeIndex {
            num_nodes,
            src,
            dst,
            out_order,
            out_offsets,
            in_order,
            in_offsets,
        })
    }

    /// Every node's neighbourhood including itself: `(i, j)` for each
    /// undirected edge in both directions plus `(i, i)`.
    pub fn neighborhoods(num_nodes: usize, undirected: &[(usize, usize)]) -> Result<Self> {
        let mut pairs = Vec::with_capacity(2 * undirected.len() + num_nodes);
        pairs.extend((0..num_nodes).map(|i| (i, i)));
        for &(i, j) in undirected {
            if i != j {
                pairs.push((i, j));
                pairs.push((j, i));
            }
        }
        pairs.sort_unstable();
        pairs.dedup();
        Self::new(num_nodes, &pairs)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn src(&self) -> &[usize] {
        &self.src
    }

    pub fn dst(&self) -> &[usize] {
        &self.dst
    }

    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = usize> + Clone + '_ {
        self.out_order[self.out_offsets[i]..self.out_offsets[i + 1]]
            .iter()
            .copied()
    }

    pub fn in_edges(&self, j: usize) -> impl Iterator<Item = usize> + Clone + '_ {
        self.in_order[self.in_offsets[j]..self.in_offsets[j + 1]]
            .iter()
            .copied()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out_offsets[i + 1] - self.out_offsets[i]
    }
}

/// Counting sort of edge positions by endpoint.
fn bucket(n: usize, keys: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut offsets = vec![0usize; n + 1];
    for &k in keys {
        offsets[k + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut next = offsets.clone();
    let mut order = vec![0usize; keys.len()];
    for (e, &k) in keys.iter().enumerate() {
        order[next[k]] = e;
        next[k] += 1;
    }
    (order, offsets)
}
