//! Reverse-mode autodiff over dense row-major matrices.
//!
//! Nodes are appended in evaluation order, so parents always have smaller
//! indices than their children and a single reverse sweep is a valid
//! topological order. Scalars are `1×1` matrices.

use std::sync::Arc;

use ndarray::{s, Array2, ArrayView2, Axis, Zip};

use super::scalar::UnaryFn;
use super::EdgeIndex;
use crate::par;
use crate::{Error, Result};

pub type Tensor = Array2<f64>;

/// Rows per task in the blocked matrix products. Fixed so the floating-point
/// evaluation order never depends on the thread count.
const MATMUL_BLOCK_ROWS: usize = 64;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Unary(Var, UnaryFn),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    SumRows(Var),
    SumAll(Var),
    Gather(Var, Arc<Vec<usize>>),
    EdgeDot(Var, Var, Arc<EdgeIndex>),
    Spmm(Var, Var, Arc<EdgeIndex>),
    SegmentSoftmax(Var, Arc<EdgeIndex>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation graph under construction.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Accumulated gradients of leaves that require them.
    leaf_grads: Vec<Option<Tensor>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        // row-parallel kernels rely on contiguous row-major storage
        let value = if value.is_standard_layout() {
            value
        } else {
            value.as_standard_layout().into_owned()
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar_param(&mut self, v: f64) -> Var {
        self.param(Array2::from_elem((1, 1), v))
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a `1×1` node.
    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- element-wise ------------------------------------------------------

    pub fn unary(&mut self, a: Var, f: UnaryFn) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.ncols();
        let slice = out.as_slice_mut().expect("standard layout");
        par::for_each_row_mut(slice, cols, |_, row| {
            row.iter_mut().for_each(|x| *x = f.value(*x));
        });
        let rg = self.rg(a);
        self.push(out, Op::Unary(a, f), rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Neg)
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Exp)
    }
    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Ln)
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Sqrt)
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Square)
    }
    pub fn recip(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Recip)
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Tanh)
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Relu)
    }
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, UnaryFn::Softplus)
    }
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, UnaryFn::Scale(s))
    }
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, UnaryFn::AddScalar(s))
    }
    pub fn clamp_max(&mut self, a: Var, hi: f64) -> Var {
        self.unary(a, UnaryFn::ClampMax(hi))
    }
    pub fn clamp_min(&mut self, a: Var, lo: f64) -> Var {
        self.unary(a, UnaryFn::ClampMin(lo))
    }

    fn binary(&mut self, a: Var, b: Var, op: Op) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(va.dim(), vb.dim())?;
        let va = va.broadcast(shape).expect("checked shape");
        let vb = vb.broadcast(shape).expect("checked shape");
        let out = match op {
            Op::Add(..) => Zip::from(&va).and(&vb).map_collect(|x, y| x + y),
            Op::Sub(..) => Zip::from(&va).and(&vb).map_collect(|x, y| x - y),
            Op::Mul(..) => Zip::from(&va).and(&vb).map_collect(|x, y| x * y),
            Op::Div(..) => Zip::from(&va).and(&vb).map_collect(|x, y| x / y),
            _ => unreachable!("binary op"),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    /// Broadcasting sum; each dimension must match or be 1.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b))
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b))
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b))
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div(a, b))
    }

    // ---- reductions and linear algebra ------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(Error::contract(format!(
                "matmul: {:?} x {:?}",
                va.dim(),
                vb.dim()
            )));
        }
        let out = blocked_matmul(va.view(), vb.view());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    /// Row sums, `r×c → r×1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Sum of all entries, `→ 1×1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let total: f64 = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(Array2::from_elem((1, 1), total), Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Rows of `a` selected by `idx`.
    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let va = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= va.nrows()) {
            return Err(Error::contract(format!(
                "gather_rows: index {bad} out of {} rows",
                va.nrows()
            )));
        }
        let out = va.select(Axis(0), &idx);
        let rg = self.rg(a);
        Ok(self.push(out, Op::Gather(a, idx), rg))
    }

    /// Per-edge row dot products `out[e] = a[src_e] · b[dst_e]`, `E×1`.
    pub fn edge_dot(&mut self, a: Var, b: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.ncols()
            || va.nrows() < edges.num_nodes()
            || vb.nrows() < edges.num_nodes()
        {
            return Err(Error::contract(
                "edge_dot: operand shapes do not match the edge index",
            ));
        }
        let vals = par::map_range(edges.len(), |e| {
            let (i, j) = (edges.src()[e], edges.dst()[e]);
            va.row(i).dot(&vb.row(j))
        });
        let out = Array2::from_shape_vec((edges.len(), 1), vals).expect("shape");
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::EdgeDot(a, b, edges), rg))
    }

    /// Sparse aggregation `out[i] = Σ_{e: src_e = i} w_e · y[dst_e]`, `N×d`.
    pub fn spmm(&mut self, weights: Var, y: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (vw, vy) = (self.value(weights), self.value(y));
        if vw.dim() != (edges.len(), 1) || vy.nrows() != edges.num_nodes() {
            return Err(Error::contract(format!(
                "spmm: weights {:?}, features {:?}, {} edges over {} nodes",
                vw.dim(),
                vy.dim(),
                edges.len(),
                edges.num_nodes()
            )));
        }
        let d = vy.ncols();
        let mut out = Array2::zeros((edges.num_nodes(), d));
        let slice = out.as_slice_mut().expect("standard layout");
        par::for_each_row_mut(slice, d, |i, row| {
            for e in edges.out_edges(i) {
                let w = vw[[e, 0]];
                row.iter_mut()
                    .zip(vy.row(edges.dst()[e]))
                    .for_each(|(o, v)| *o += w * v);
            }
        });
        let rg = self.rg(weights) || self.rg(y);
        Ok(self.push(out, Op::Spmm(weights, y, edges), rg))
    }

    /// Softmax of an `E×1` column within each source-node segment.
    pub fn segment_softmax(&mut self, logits: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let vl = self.value(logits);
        if vl.dim() != (edges.len(), 1) {
            return Err(Error::contract("segment_softmax: logits must be E×1"));
        }
        let mut out = Array2::zeros((edges.len(), 1));
        for i in 0..edges.num_nodes() {
            let max = edges
                .out_edges(i)
                .map(|e| vl[[e, 0]])
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for e in edges.out_edges(i) {
                let v = (vl[[e, 0]] - max).exp();
                out[[e, 0]] = v;
                total += v;
            }
            for e in edges.out_edges(i) {
                out[[e, 0]] /= total;
            }
        }
        let rg = self.rg(logits);
        Ok(self.push(out, Op::SegmentSoftmax(logits, edges), rg))
    }

    // ---- backward ----------------------------------------------------------

    /// Accumulates `∂output/∂leaf` into every differentiable leaf.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.shape(output) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => *acc += &g,
                        slot => *slot = Some(g),
                    }
                    continue;
                }
                Op::Unary(a, f) => {
                    let x = &self.nodes[a.0].value;
                    let y = &node.value;
                    let f = *f;
                    let ga = Zip::from(&g)
                        .and(x)
                        .and(y)
                        .map_collect(|&g, &x, &y| g * f.derivative(x, y));
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let ga = reduce_to(&g, self.shape(a));
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = reduce_to(&g, self.shape(b));
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let ga = reduce_to(&g, self.shape(a));
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = -reduce_to(&g, self.shape(b));
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let shape = g.dim();
                    let va = self.value(a).broadcast(shape).expect("shape");
                    let vb = self.value(b).broadcast(shape).expect("shape");
                    if self.rg(a) {
                        let full = Zip::from(&g).and(&vb).map_collect(|g, y| g * y);
                        let ga = reduce_to(&full, self.shape(a));
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let full = Zip::from(&g).and(&va).map_collect(|g, x| g * x);
                        let gb = reduce_to(&full, self.shape(b));
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Div(a, b) => {
                    let (a, b) = (*a, *b);
                    let shape = g.dim();
                    let va = self.value(a).broadcast(shape).expect("shape");
                    let vb = self.value(b).broadcast(shape).expect("shape");
                    if self.rg(a) {
                        let full = Zip::from(&g).and(&vb).map_collect(|g, y| g / y);
                        let ga = reduce_to(&full, self.shape(a));
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let full = Zip::from(&g)
                            .and(&va)
                            .and(&vb)
                            .map_collect(|g, x, y| -g * x / (y * y));
                        let gb = reduce_to(&full, self.shape(b));
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let ga = blocked_matmul(g.view(), self.value(b).t());
                        self.accumulate(&mut grads, a, ga);
                    }
                    if self.rg(b) {
                        let gb = blocked_matmul(self.value(a).t(), g.view());
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let ga = g.t().to_owned();
                    self.accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let a = *a;
                    let ga = g
                        .broadcast(self.shape(a))
                        .expect("column broadcast")
                        .to_owned();
                    self.accumulate(&mut grads, a, ga);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let ga = Array2::from_elem(self.shape(a), g[[0, 0]]);
                    self.accumulate(&mut grads, a, ga);
                }
                Op::Gather(a, idx) => {
                    let a = *a;
                    let mut ga = Array2::zeros(self.shape(a));
                    for (r, &i) in idx.iter().enumerate() {
                        let mut dst = ga.row_mut(i);
                        dst += &g.row(r);
                    }
                    self.accumulate(&mut grads, a, ga);
                }
                Op::EdgeDot(a, b, edges) => {
                    let (a, b, edges) = (*a, *b, edges.clone());
                    let (va, vb) = (self.value(a), self.value(b));
                    if self.rg(a) {
                        let ga = scatter_rows(va.dim(), &edges, Side::Src, |e, row| {
                            let w = g[[e, 0]];
                            row.iter_mut()
                                .zip(vb.row(edges.dst()[e]))
                                .for_each(|(o, v)| *o += w * v);
                        });
                        self.accumulate(&mut grads, a, ga);
                    }
                    let (va, vb) = (self.value(a), self.value(b));
                    if self.rg(b) {
                        let gb = scatter_rows(vb.dim(), &edges, Side::Dst, |e, row| {
                            let w = g[[e, 0]];
                            row.iter_mut()
                                .zip(va.row(edges.src()[e]))
                                .for_each(|(o, v)| *o += w * v);
                        });
                        self.accumulate(&mut grads, b, gb);
                    }
                }
                Op::Spmm(w, y, edges) => {
                    let (w, y, edges) = (*w, *y, edges.clone());
                    let vy = self.value(y);
                    if self.rg(w) {
                        let vals = par::map_range(edges.len(), |e| {
                            g.row(edges.src()[e]).dot(&vy.row(edges.dst()[e]))
                        });
                        let gw = Array2::from_shape_vec((edges.len(), 1), vals).expect("shape");
                        self.accumulate(&mut grads, w, gw);
                    }
                    let vw = &self.nodes[w.0].value;
                    if self.rg(y) {
                        let gy = scatter_rows(self.shape(y), &edges, Side::Dst, |e, row| {
                            let a = vw[[e, 0]];
                            row.iter_mut()
                                .zip(g.row(edges.src()[e]))
                                .for_each(|(o, v)| *o += a * v);
                        });
                        self.accumulate(&mut grads, y, gy);
                    }
                }
                Op::SegmentSoftmax(a, edges) => {
                    let (a, edges) = (*a, edges.clone());
                    let y = &node.value;
                    let mut ga = Array2::zeros((edges.len(), 1));
                    for i in 0..edges.num_nodes() {
                        let dot: f64 = edges.out_edges(i).map(|e| g[[e, 0]] * y[[e, 0]]).sum();
                        for e in edges.out_edges(i) {
                            ga[[e, 0]] = y[[e, 0]] * (g[[e, 0]] - dot);
                        }
                    }
                    self.accumulate(&mut grads, a, ga);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }
}

#[derive(Clone, Copy)]
enum Side {
    Src,
    Dst,
}

/// Builds an `rows×cols` gradient where row `i` accumulates `f(e, row)` over
/// the edges whose `side` endpoint is `i`, in a fixed edge order.
fn scatter_rows<F>(shape: (usize, usize), edges: &EdgeIndex, side: Side, f: F) -> Tensor
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let (rows, cols) = shape;
    let mut out = Array2::zeros(shape);
    if cols == 0 {
        return out;
    }
    let slice = out.as_slice_mut().expect("standard layout");
    par::for_each_row_mut(slice, cols, |i, row| {
        if i >= edges.num_nodes() {
            return;
        }
        match side {
            Side::Src => edges.out_edges(i).for_each(|e| f(e, row)),
            Side::Dst => edges.in_edges(i).for_each(|e| f(e, row)),
        }
    });
    debug_assert_eq!(out.nrows(), rows);
    out
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::contract(format!(
            "shapes {a:?} and {b:?} do not broadcast"
        ))),
    }
}

/// Sums `g` down to `shape` along broadcast dimensions.
fn reduce_to(g: &Tensor, shape: (usize, usize)) -> Tensor {
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() != 1 {
        out = out.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && out.ncols() != 1 {
        out = out.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    out
}

/// `a · b`, computed in fixed blocks of output rows.
pub fn blocked_matmul(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Tensor {
    let (n, m) = (a.nrows(), b.ncols());
    let blocks = n.div_ceil(MATMUL_BLOCK_ROWS);
    let parts = par::map_tasks_if(blocks, blocks > 1 && n * m * a.ncols() > 1 << 16, |bi| {
        let lo = bi * MATMUL_BLOCK_ROWS;
        let hi = (lo + MATMUL_BLOCK_ROWS).min(n);
        a.slice(s![lo..hi, ..]).dot(&b)
    });
    let mut out = Array2::zeros((n, m));
    for (bi, part) in parts.into_iter().enumerate() {
        let lo = bi * MATMUL_BLOCK_ROWS;
        out.slice_mut(s![lo..lo + part.nrows(), ..]).assign(&part);
    }
    out
}
