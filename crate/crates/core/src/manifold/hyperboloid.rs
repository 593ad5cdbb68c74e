use super::{arcosh_clamped, norm_sq, Curvature};
use crate::{Error, Result};

/// `⟨x, y⟩_L = -x₀y₀ + Σ xᵢyᵢ`.
pub fn lorentz_inner(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::contract(format!(
            "lorentz_inner: dimensions {} and {} differ",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::contract("lorentz_inner needs dimension >= 2"));
    }
    Ok(-x[0] * y[0] + x[1..].iter().zip(&y[1..]).map(|(a, b)| a * b).sum::<f64>())
}

/// `sqrt(max(⟨v, v⟩_L, 0))`.
pub fn lorentz_norm(v: &[f64]) -> f64 {
    let sp = norm_sq(&v[1..]) - v[0] * v[0];
    sp.max(0.0).sqrt()
}

pub(super) fn project(x: &[f64], k: Curvature) -> Vec<f64> {
    let mut out = x.to_vec();
    out[0] = (1.0 / k.abs() + norm_sq(&x[1..])).sqrt();
    out
}

pub(super) fn distance(x: &[f64], y: &[f64], k: Curvature) -> Result<f64> {
    let arg = k.value() * lorentz_inner(x, y)?;
    Ok(arcosh_clamped(arg)? / k.sqrt_abs())
}

pub(super) fn exp_map(x: &[f64], v: &[f64], k: Curvature) -> Vec<f64> {
    let vn = lorentz_norm(v);
    if vn == 0.0 {
        return x.to_vec();
    }
    let s = k.sqrt_abs() * vn;
    let (ch, sh) = (s.cosh(), s.sinh() / s);
    let raw: Vec<f64> = x.iter().zip(v).map(|(a, b)| ch * a + sh * b).collect();
    project(&raw, k)
}

pub(super) fn log_map(x: &[f64], y: &[f64], k: Curvature) -> Result<Vec<f64>> {
    if x == y {
        return Ok(vec![0.0; x.len()]);
    }
    let a = k.value() * lorentz_inner(x, y)?;
    let theta = arcosh_clamped(a)?;
    let a = a.max(1.0);
    let den = (a * a - 1.0).sqrt();
    if den == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let s = theta / den;
    Ok(x.iter().zip(y).map(|(xi, yi)| s * (yi - a * xi)).collect())
}

/// `v` is the spatial part of a tangent vector at the origin.
pub(super) fn exp0(v: &[f64], k: Curvature) -> Vec<f64> {
    let sc = k.sqrt_abs();
    let vn = norm_sq(v).sqrt();
    let mut out = Vec::with_capacity(v.len() + 1);
    out.push(0.0);
    if vn == 0.0 {
        out.extend_from_slice(v);
    } else {
        let s = (sc * vn).sinh() / (sc * vn);
        out.extend(v.iter().map(|a| a * s));
    }
    project(&out, k)
}

/// Spatial part of `log_o(x)`; the time component is identically zero.
pub(super) fn log0(x: &[f64], k: Curvature) -> Vec<f64> {
    let sc = k.sqrt_abs();
    let sp = &x[1..];
    let n = norm_sq(sp).sqrt();
    if n == 0.0 {
        return sp.to_vec();
    }
    let s = (sc * n).asinh() / (sc * n);
    sp.iter().map(|a| a * s).collect()
}

pub(super) fn to_poincare(x: &[f64], k: Curvature) -> Vec<f64> {
    let den = k.sqrt_abs() * x[0] + 1.0;
    x[1..].iter().map(|a| a / den).collect()
}

pub(super) fn from_poincare(x: &[f64], k: Curvature) -> Vec<f64> {
    let n2 = norm_sq(x);
    let den = 1.0 - k.abs() * n2;
    let mut out = Vec::with_capacity(x.len() + 1);
    out.push((1.0 + k.abs() * n2) / (k.sqrt_abs() * den));
    out.extend(x.iter().map(|a| 2.0 * a / den));
    out
}
