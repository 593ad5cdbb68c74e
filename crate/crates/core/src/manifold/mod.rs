//! Closed-form hyperbolic geometry for the Poincaré ball and the hyperboloid.
//!
//! Everything here works on plain `f64` slices and is a pure function of its
//! inputs. The differentiable counterparts used during training live in
//! [`crate::diffcore::geom`] and are checked against these.

mod hyperboloid;
mod poincare;

pub use hyperboloid::{lorentz_inner, lorentz_norm};
pub use poincare::{conformal_factor, mobius_add};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Points are kept at least this far (relative) inside the ball boundary.
pub const BALL_EPS: f64 = 1e-5;
/// Upper clamp applied to artanh arguments is `1 - ARTANH_EPS`.
pub const ARTANH_EPS: f64 = 1e-15;
/// An arcosh argument below `1 - ARCOSH_TOL` is an error rather than rounding noise.
pub const ARCOSH_TOL: f64 = 1e-9;
/// Relative tolerance on the hyperboloid constraint and on tangency.
pub const HYPERBOLOID_TOL: f64 = 1e-6;

pub const MIN_ABS_CURVATURE: f64 = 1e-4;
pub const MAX_ABS_CURVATURE: f64 = 1e2;

/// Sectional curvature `K < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curvature(f64);

impl Curvature {
    /// Accepts finite `K` with `|K|` in `[1e-4, 1e2]`.
    pub fn new(k: f64) -> Result<Self> {
        if !k.is_finite() || k >= 0.0 {
            return Err(Error::contract(format!(
                "curvature must be finite and negative, got {k}"
            )));
        }
        if !(MIN_ABS_CURVATURE..=MAX_ABS_CURVATURE).contains(&-k) {
            return Err(Error::contract(format!(
                "|K| must lie in [{MIN_ABS_CURVATURE}, {MAX_ABS_CURVATURE}], got {k}"
            )));
        }
        Ok(Curvature(k))
    }

    /// Projects any negative value into the admissible range.
    pub fn clamped(k: f64) -> Result<Self> {
        if !k.is_finite() || k >= 0.0 {
            return Err(Error::numeric(format!(
                "cannot clamp non-negative or non-finite curvature {k}"
            )));
        }
        Ok(Curvature(-(-k).clamp(MIN_ABS_CURVATURE, MAX_ABS_CURVATURE)))
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// `-K`, the positive "c" of most hyperbolic-network code.
    #[inline]
    pub fn abs(self) -> f64 {
        -self.0
    }

    #[inline]
    pub fn sqrt_abs(self) -> f64 {
        (-self.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    #[serde(rename = "poincare")]
    PoincareBall,
    Hyperboloid,
}

impl ManifoldKind {
    /// Number of ambient coordinates for an `n`-dimensional manifold.
    pub fn ambient_dim(self, n: usize) -> usize {
        match self {
            ManifoldKind::PoincareBall => n,
            ManifoldKind::Hyperboloid => n + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::PoincareBall => "poincare",
            ManifoldKind::Hyperboloid => "hyperboloid",
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poincare" | "ball" | "p" => Ok(ManifoldKind::PoincareBall),
            "hyperboloid" | "lorentz" | "h" => Ok(ManifoldKind::Hyperboloid),
            other => Err(Error::contract(format!("unknown manifold '{other}'"))),
        }
    }
}

impl std::fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A point on one of the two models, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    kind: ManifoldKind,
    coords: Vec<f64>,
    curvature: Curvature,
}

impl ManifoldPoint {
    /// Validates the model invariant without modifying `coords`.
    pub fn new(kind: ManifoldKind, coords: Vec<f64>, curvature: Curvature) -> Result<Self> {
        check_finite(&coords)?;
        match kind {
            ManifoldKind::PoincareBall => {
                if coords.is_empty() {
                    return Err(Error::contract("ball point needs at least one coordinate"));
                }
                let n2 = norm_sq(&coords);
                if n2 * curvature.abs() >= 1.0 {
                    return Err(Error::contract(format!(
                        "point with squared norm {n2} lies outside the ball of curvature {}",
                        curvature.value()
                    )));
                }
            }
            ManifoldKind::Hyperboloid => {
                if coords.len() < 2 {
                    return Err(Error::contract(
                        "hyperboloid point needs at least two coordinates",
                    ));
                }
                let target = 1.0 / curvature.value();
                let got = lorentz_inner(&coords, &coords)?;
                // relative to the size of the cancelling terms
                let scale = target.abs().max(coords[0] * coords[0]);
                if coords[0] <= 0.0 || (got - target).abs() > HYPERBOLOID_TOL * scale {
                    return Err(Error::contract(format!(
                        "point is off the hyperboloid: <x,x>_L = {got}, expected {target}"
                    )));
                }
            }
        }
        Ok(ManifoldPoint {
            kind,
            coords,
            curvature,
        })
    }

    pub(crate) fn new_unchecked(
        kind: ManifoldKind,
        coords: Vec<f64>,
        curvature: Curvature,
    ) -> Self {
        ManifoldPoint {
            kind,
            coords,
            curvature,
        }
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::PoincareBall => self.coords.len(),
            ManifoldKind::Hyperboloid => self.coords.len() - 1,
        }
    }
}

/// A tangent vector in ambient coordinates, attached to its base point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVec {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl TangentVec {
    /// On the hyperboloid the vector must be Lorentz-orthogonal to the base.
    pub fn new(base: ManifoldPoint, coords: Vec<f64>) -> Result<Self> {
        check_finite(&coords)?;
        if coords.len() != base.coords.len() {
            return Err(Error::contract(format!(
                "tangent vector has {} coordinates, base point has {}",
                coords.len(),
                base.coords.len()
            )));
        }
        if base.kind == ManifoldKind::Hyperboloid {
            let dot = lorentz_inner(&base.coords, &coords)?;
            let scale = norm_sq(&base.coords).sqrt() * norm_sq(&coords).sqrt();
            if dot.abs() > HYPERBOLOID_TOL * scale.max(1.0) {
                return Err(Error::contract(format!(
                    "vector is not tangent to the hyperboloid: <x,v>_L = {dot}"
                )));
            }
        }
        Ok(TangentVec { base, coords })
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Length under the Riemannian metric at the base point.
    pub fn metric_norm(&self) -> f64 {
        match self.base.kind {
            ManifoldKind::PoincareBall => {
                let lambda = 2.0 / (1.0 - self.base.curvature.abs() * norm_sq(&self.base.coords));
                lambda * norm_sq(&self.coords).sqrt()
            }
            ManifoldKind::Hyperboloid => lorentz_norm(&self.coords),
        }
    }
}

/// The origin `o` of the `n`-dimensional model.
pub fn origin(kind: ManifoldKind, n: usize, k: Curvature) -> ManifoldPoint {
    let mut coords = vec![0.0; kind.ambient_dim(n.max(1))];
    if kind == ManifoldKind::Hyperboloid {
        coords[0] = 1.0 / k.sqrt_abs();
    }
    ManifoldPoint::new_unchecked(kind, coords, k)
}

/// Numerical projection onto the model.
///
/// Ball points outside radius `(1 - 1e-5)/sqrt|K|` are rescaled onto it; on
/// the hyperboloid the time coordinate is recomputed from the spatial part.
pub fn project(raw: &[f64], kind: ManifoldKind, k: Curvature) -> Result<ManifoldPoint> {
    check_finite(raw)?;
    let coords = match kind {
        ManifoldKind::PoincareBall => poincare::project(raw, k),
        ManifoldKind::Hyperboloid => {
            if raw.len() < 2 {
                return Err(Error::contract(
                    "hyperboloid point needs at least two coordinates",
                ));
            }
            hyperboloid::project(raw, k)
        }
    };
    Ok(ManifoldPoint::new_unchecked(kind, coords, k))
}

fn same_space(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<()> {
    if x.kind != y.kind {
        return Err(Error::contract(format!(
            "points live on different models ({} vs {})",
            x.kind, y.kind
        )));
    }
    if x.curvature != y.curvature {
        return Err(Error::contract(format!(
            "points have different curvature ({} vs {})",
            x.curvature.value(),
            y.curvature.value()
        )));
    }
    if x.coords.len() != y.coords.len() {
        return Err(Error::contract("points have different dimensions"));
    }
    Ok(())
}

/// Geodesic distance.
pub fn distance(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    same_space(x, y)?;
    match x.kind {
        ManifoldKind::PoincareBall => poincare::distance(&x.coords, &y.coords, x.curvature),
        ManifoldKind::Hyperboloid => hyperboloid::distance(&x.coords, &y.coords, x.curvature),
    }
}

/// Exponential map at `x`.
pub fn exp_map(x: &ManifoldPoint, v: &TangentVec) -> Result<ManifoldPoint> {
    same_space(x, &v.base)?;
    if x.coords != v.base.coords {
        return Err(Error::contract(
            "tangent vector is based at a different point",
        ));
    }
    let coords = match x.kind {
        ManifoldKind::PoincareBall => poincare::exp_map(&x.coords, &v.coords, x.curvature)?,
        ManifoldKind::Hyperboloid => hyperboloid::exp_map(&x.coords, &v.coords, x.curvature),
    };
    Ok(ManifoldPoint::new_unchecked(x.kind, coords, x.curvature))
}

/// Logarithmic map at `x`; the zero vector when `y == x`.
pub fn log_map(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVec> {
    same_space(x, y)?;
    let coords = match x.kind {
        ManifoldKind::PoincareBall => poincare::log_map(&x.coords, &y.coords, x.curvature)?,
        ManifoldKind::Hyperboloid => hyperboloid::log_map(&x.coords, &y.coords, x.curvature)?,
    };
    Ok(TangentVec {
        base: x.clone(),
        coords,
    })
}

/// Exponential map at the origin, taking an intrinsic `n`-vector (for the
/// hyperboloid, the spatial part of a tangent vector at `o`).
pub fn exp0(v: &[f64], kind: ManifoldKind, k: Curvature) -> ManifoldPoint {
    let coords = match kind {
        ManifoldKind::PoincareBall => poincare::exp0(v, k),
        ManifoldKind::Hyperboloid => hyperboloid::exp0(v, k),
    };
    ManifoldPoint::new_unchecked(kind, coords, k)
}

/// Logarithmic map at the origin, returning the intrinsic `n`-vector.
pub fn log0(x: &ManifoldPoint) -> Vec<f64> {
    match x.kind {
        ManifoldKind::PoincareBall => poincare::log0(&x.coords, x.curvature),
        ManifoldKind::Hyperboloid => hyperboloid::log0(&x.coords, x.curvature),
    }
}

/// Hyperboloid to Poincaré ball.
pub fn to_poincare(x: &ManifoldPoint) -> Result<ManifoldPoint> {
    if x.kind != ManifoldKind::Hyperboloid {
        return Err(Error::contract("to_poincare expects a hyperboloid point"));
    }
    let k = x.curvature;
    let coords = poincare::project(&hyperboloid::to_poincare(&x.coords, k), k);
    Ok(ManifoldPoint::new_unchecked(
        ManifoldKind::PoincareBall,
        coords,
        k,
    ))
}

/// Poincaré ball to hyperboloid.
pub fn to_hyperboloid(x: &ManifoldPoint) -> Result<ManifoldPoint> {
    if x.kind != ManifoldKind::PoincareBall {
        return Err(Error::contract("to_hyperboloid expects a ball point"));
    }
    let k = x.curvature;
    let coords = hyperboloid::from_poincare(&x.coords, k);
    Ok(ManifoldPoint::new_unchecked(
        ManifoldKind::Hyperboloid,
        coords,
        k,
    ))
}

/// Hyperbolic distance from the origin.
pub fn distance_from_origin(x: &ManifoldPoint) -> Result<f64> {
    let o = origin(x.kind, x.dim(), x.curvature);
    distance(&o, x)
}

pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(v: &[f64]) -> Result<()> {
    if let Some(i) = v.iter().position(|a| !a.is_finite()) {
        return Err(Error::numeric(format!(
            "coordinate {i} is not finite ({})",
            v[i]
        )));
    }
    Ok(())
}

/// `arcosh` with the domain clamp; errors when the argument is clearly below 1.
pub(crate) fn arcosh_clamped(a: f64) -> Result<f64> {
    if a.is_nan() || a < 1.0 - ARCOSH_TOL {
        return Err(Error::numeric(format!("arcosh argument {a} is below 1")));
    }
    Ok(a.max(1.0).acosh())
}

pub(crate) fn artanh_clamped(a: f64) -> f64 {
    a.min(1.0 - ARTANH_EPS).atanh()
}
