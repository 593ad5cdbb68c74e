use super::{arcosh_clamped, artanh_clamped, dot, norm_sq, Curvature, BALL_EPS};
use crate::{Error, Result};

/// Smallest Möbius denominator treated as non-degenerate.
const MOBIUS_DEN_MIN: f64 = 1e-15;

/// `λ_x = 2 / (1 + K‖x‖²)`.
pub fn conformal_factor(x: &[f64], k: Curvature) -> Result<f64> {
    let den = 1.0 - k.abs() * norm_sq(x);
    if den <= 0.0 || !den.is_finite() {
        return Err(Error::contract(format!(
            "point with squared norm {} is outside the ball of curvature {}",
            norm_sq(x),
            k.value()
        )));
    }
    Ok(2.0 / den)
}

/// Möbius addition `x ⊕_K y`, projected back into the ball.
pub fn mobius_add(x: &[f64], y: &[f64], k: Curvature) -> Result<Vec<f64>> {
    if x.len() != y.len() {
        return Err(Error::contract("mobius_add: dimension mismatch"));
    }
    let c = k.abs();
    let xy = dot(x, y);
    let x2 = norm_sq(x);
    let y2 = norm_sq(y);
    let cx = 1.0 + 2.0 * c * xy + c * y2;
    let cy = 1.0 - c * x2;
    let den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    if den.abs() < MOBIUS_DEN_MIN {
        return Err(Error::numeric(format!(
            "mobius_add denominator {den} vanishes for x={x:?}, y={y:?}"
        )));
    }
    let out: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (cx * a + cy * b) / den)
        .collect();
    Ok(project(&out, k))
}

pub(super) fn project(x: &[f64], k: Curvature) -> Vec<f64> {
    let max_norm = (1.0 - BALL_EPS) / k.sqrt_abs();
    let norm = norm_sq(x).sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        x.iter().map(|a| a * s).collect()
    } else {
        x.to_vec()
    }
}

pub(super) fn distance(x: &[f64], y: &[f64], k: Curvature) -> Result<f64> {
    let c = k.abs();
    let diff: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let den = (1.0 - c * norm_sq(x)) * (1.0 - c * norm_sq(y));
    if den <= 0.0 {
        return Err(Error::contract("distance: point outside the ball"));
    }
    let arg = 1.0 + 2.0 * c * diff / den;
    Ok(arcosh_clamped(arg)? / k.sqrt_abs())
}

pub(super) fn exp_map(x: &[f64], v: &[f64], k: Curvature) -> Result<Vec<f64>> {
    let vn = norm_sq(v).sqrt();
    if vn == 0.0 {
        return Ok(x.to_vec());
    }
    let sc = k.sqrt_abs();
    let lambda = conformal_factor(x, k)?;
    let s = (sc * lambda * vn / 2.0).tanh() / (sc * vn);
    let second: Vec<f64> = v.iter().map(|a| a * s).collect();
    mobius_add(x, &project(&second, k), k)
}

pub(super) fn log_map(x: &[f64], y: &[f64], k: Curvature) -> Result<Vec<f64>> {
    if x == y {
        return Ok(vec![0.0; x.len()]);
    }
    let neg_x: Vec<f64> = x.iter().map(|a| -a).collect();
    let u = mobius_add(&neg_x, y, k)?;
    let un = norm_sq(&u).sqrt();
    if un == 0.0 {
        return Ok(vec![0.0; x.len()]);
    }
    let sc = k.sqrt_abs();
    let lambda = conformal_factor(x, k)?;
    let s = 2.0 / (sc * lambda) * artanh_clamped(sc * un) / un;
    Ok(u.iter().map(|a| a * s).collect())
}

pub(super) fn exp0(v: &[f64], k: Curvature) -> Vec<f64> {
    let sc = k.sqrt_abs();
    let vn = norm_sq(v).sqrt();
    if vn == 0.0 {
        return v.to_vec();
    }
    let s = (sc * vn).tanh() / (sc * vn);
    project(&v.iter().map(|a| a * s).collect::<Vec<_>>(), k)
}

pub(super) fn log0(x: &[f64], k: Curvature) -> Vec<f64> {
    let sc = k.sqrt_abs();
    let xn = norm_sq(x).sqrt();
    if xn == 0.0 {
        return x.to_vec();
    }
    let s = artanh_clamped(sc * xn) / (sc * xn);
    x.iter().map(|a| a * s).collect()
}
