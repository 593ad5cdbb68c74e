//! Differentiable hyperbolic geometry on a [`Tape`].
//!
//! Row-batched counterparts of the closed forms in [`crate::manifold`]. The
//! curvature enters as a `1×1` node holding `c = -K > 0`, so it can be a
//! trainable quantity. Maps are taken at the origin only; on the hyperboloid
//! a tangent vector at the origin is represented by its spatial part.

use std::sync::Arc;

use super::{EdgeIndex, Tape, UnaryFn, Var};
use crate::manifold::{ManifoldKind, BALL_EPS};
use crate::Result;

/// A batch of points, one per row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Points {
    Ball(Var),
    /// Time coordinates (`N×1`) and spatial coordinates (`N×n`).
    Hyperboloid {
        time: Var,
        space: Var,
    },
}

impl Points {
    pub fn kind(&self) -> ManifoldKind {
        match self {
            Points::Ball(_) => ManifoldKind::PoincareBall,
            Points::Hyperboloid { .. } => ManifoldKind::Hyperboloid,
        }
    }
}

/// `Σⱼ vᵢⱼ²` per row, `N×1`.
pub fn sq_norm_rows(t: &mut Tape, v: Var) -> Var {
    let sq = t.square(v);
    t.sum_rows(sq)
}

/// `exp_o` of tangent rows `v` on the chosen model.
pub fn exp0(t: &mut Tape, kind: ManifoldKind, v: Var, c: Var) -> Result<Points> {
    match kind {
        ManifoldKind::PoincareBall => Ok(Points::Ball(ball_exp0(t, v, c)?)),
        ManifoldKind::Hyperboloid => {
            let (time, space) = hyp_exp0(t, v, c)?;
            Ok(Points::Hyperboloid { time, space })
        }
    }
}

/// `log_o` as intrinsic tangent rows.
pub fn log0(t: &mut Tape, p: Points, c: Var) -> Result<Var> {
    match p {
        Points::Ball(x) => ball_log0(t, x, c),
        Points::Hyperboloid { space, .. } => hyp_log0(t, space, c),
    }
}

/// Squared distance between the endpoints of every edge, `E×1`.
pub fn sq_dist_edges(t: &mut Tape, p: Points, c: Var, edges: &Arc<EdgeIndex>) -> Result<Var> {
    match p {
        Points::Ball(x) => ball_sq_dist_edges(t, x, c, edges),
        Points::Hyperboloid { time, space } => hyp_sq_dist_edges(t, time, space, c, edges),
    }
}

fn w_of(t: &mut Tape, v: Var, c: Var) -> Result<Var> {
    let n2 = sq_norm_rows(t, v);
    t.mul(n2, c)
}

pub fn ball_exp0(t: &mut Tape, v: Var, c: Var) -> Result<Var> {
    let w = w_of(t, v, c)?;
    let f = t.unary(w, UnaryFn::TanhcSqrt);
    let p = t.mul(v, f)?;
    ball_project(t, p, c)
}

pub fn ball_log0(t: &mut Tape, p: Var, c: Var) -> Result<Var> {
    let w = w_of(t, p, c)?;
    let f = t.unary(w, UnaryFn::ArtanhcSqrt);
    t.mul(p, f)
}

/// Rescales rows with `√c‖x‖ > 1 - 1e-5` back onto that radius.
pub fn ball_project(t: &mut Tape, p: Var, c: Var) -> Result<Var> {
    let r = 1.0 - BALL_EPS;
    let q = w_of(t, p, c)?;
    let q = t.clamp_min(q, r * r);
    let s = t.sqrt(q);
    let f = t.recip(s);
    let f = t.scale(f, r);
    t.mul(p, f)
}

/// Möbius addition of aligned rows.
pub fn ball_mobius_add(t: &mut Tape, x: Var, y: Var, c: Var) -> Result<Var> {
    let xy = t.mul(x, y)?;
    let xy = t.sum_rows(xy);
    let x2 = sq_norm_rows(t, x);
    let y2 = sq_norm_rows(t, y);
    let cxy = t.mul(xy, c)?;
    let two_cxy = t.scale(cxy, 2.0);
    let cy2 = t.mul(y2, c)?;
    let cx2 = t.mul(x2, c)?;
    // (1 + 2c<x,y> + c|y|²) x + (1 - c|x|²) y
    let a = t.add(two_cxy, cy2)?;
    let a = t.add_scalar(a, 1.0);
    let b = t.neg(cx2);
    let b = t.add_scalar(b, 1.0);
    let ax = t.mul(a, x)?;
    let by = t.mul(b, y)?;
    let num = t.add(ax, by)?;
    // 1 + 2c<x,y> + c²|x|²|y|²
    let cc = t.mul(cx2, cy2)?;
    let den = t.add(two_cxy, cc)?;
    let den = t.add_scalar(den, 1.0);
    let out = t.div(num, den)?;
    ball_project(t, out, c)
}

/// Squared ball distance between aligned rows, `N×1`.
pub fn ball_sq_dist_rows(t: &mut Tape, x: Var, y: Var, c: Var) -> Result<Var> {
    let diff = t.sub(x, y)?;
    let diff2 = sq_norm_rows(t, diff);
    let x2 = sq_norm_rows(t, x);
    let y2 = sq_norm_rows(t, y);
    ball_sq_dist_from_parts(t, diff2, x2, y2, c)
}

fn ball_sq_dist_from_parts(t: &mut Tape, diff2: Var, x2: Var, y2: Var, c: Var) -> Result<Var> {
    let cx2 = t.mul(x2, c)?;
    let cy2 = t.mul(y2, c)?;
    let dx = t.neg(cx2);
    let dx = t.add_scalar(dx, 1.0);
    let dy = t.neg(cy2);
    let dy = t.add_scalar(dy, 1.0);
    let den = t.mul(dx, dy)?;
    let num = t.mul(diff2, c)?;
    let num = t.scale(num, 2.0);
    let arg = t.div(num, den)?;
    let arg = t.add_scalar(arg, 1.0);
    let a2 = t.unary(arg, UnaryFn::ArcoshSq);
    t.div(a2, c)
}

pub fn ball_sq_dist_edges(t: &mut Tape, x: Var, c: Var, edges: &Arc<EdgeIndex>) -> Result<Var> {
    let x2 = sq_norm_rows(t, x);
    let src = Arc::new(edges.src().to_vec());
    let dst = Arc::new(edges.dst().to_vec());
    let xi2 = t.gather_rows(x2, src)?;
    let xj2 = t.gather_rows(x2, dst)?;
    let dot = t.edge_dot(x, x, edges.clone())?;
    let s = t.add(xi2, xj2)?;
    let two_dot = t.scale(dot, 2.0);
    let diff2 = t.sub(s, two_dot)?;
    let diff2 = t.clamp_min(diff2, 0.0);
    ball_sq_dist_from_parts(t, diff2, xi2, xj2, c)
}

/// `exp_o` on the hyperboloid from spatial tangent rows; returns `(time, space)`.
pub fn hyp_exp0(t: &mut Tape, v: Var, c: Var) -> Result<(Var, Var)> {
    let w = w_of(t, v, c)?;
    let f = t.unary(w, UnaryFn::SinhcSqrt);
    let space = t.mul(v, f)?;
    let time = hyp_time(t, space, c)?;
    Ok((time, space))
}

/// `x₀ = sqrt(1/c + ‖x_s‖²)`, which places the row exactly on the sheet.
pub fn hyp_time(t: &mut Tape, space: Var, c: Var) -> Result<Var> {
    let s2 = sq_norm_rows(t, space);
    let ic = t.recip(c);
    let a = t.add(s2, ic)?;
    Ok(t.sqrt(a))
}

/// Spatial part of `log_o` on the hyperboloid.
pub fn hyp_log0(t: &mut Tape, space: Var, c: Var) -> Result<Var> {
    let w = w_of(t, space, c)?;
    let f = t.unary(w, UnaryFn::AsinhcSqrt);
    t.mul(space, f)
}

pub fn hyp_sq_dist_edges(
    t: &mut Tape,
    time: Var,
    space: Var,
    c: Var,
    edges: &Arc<EdgeIndex>,
) -> Result<Var> {
    let tt = t.edge_dot(time, time, edges.clone())?;
    let ss = t.edge_dot(space, space, edges.clone())?;
    // K<x,y>_L = c (x₀y₀ - x_s·y_s)
    let l = t.sub(tt, ss)?;
    let arg = t.mul(l, c)?;
    let a2 = t.unary(arg, UnaryFn::ArcoshSq);
    t.div(a2, c)
}

/// Hyperboloid to ball: `x_s / (√c x₀ + 1)`.
pub fn hyp_to_ball(t: &mut Tape, time: Var, space: Var, c: Var) -> Result<Var> {
    let sc = t.sqrt(c);
    let den = t.mul(time, sc)?;
    let den = t.add_scalar(den, 1.0);
    let p = t.div(space, den)?;
    ball_project(t, p, c)
}

/// Ball to hyperboloid; returns `(time, space)`.
pub fn ball_to_hyp(t: &mut Tape, p: Var, c: Var) -> Result<(Var, Var)> {
    let cn2 = w_of(t, p, c)?;
    let neg = t.neg(cn2);
    let den = t.add_scalar(neg, 1.0);
    let two_p = t.scale(p, 2.0);
    let space = t.div(two_p, den)?;
    let time = hyp_time(t, space, c)?;
    Ok((time, space))
}
