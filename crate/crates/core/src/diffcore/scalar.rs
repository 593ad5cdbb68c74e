//! Scalar functions with their derivatives, including the removable
//! singularities that show up in origin exp/log maps.
//!
//! The `*c_sqrt` family takes `w = c‖v‖² ≥ 0` instead of the norm itself, so
//! the functions and their derivatives stay smooth at `w = 0` and no square
//! root of zero is ever differentiated.

use crate::manifold::ARTANH_EPS;

/// Below this `w`, Taylor series replace the closed forms.
const SERIES_BELOW: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnaryFn {
    Neg,
    Exp,
    Ln,
    Sqrt,
    Square,
    Recip,
    Tanh,
    Relu,
    Softplus,
    Scale(f64),
    AddScalar(f64),
    /// `min(x, hi)`; zero gradient where the clamp is active.
    ClampMax(f64),
    /// `max(x, lo)`; zero gradient where the clamp is active.
    ClampMin(f64),
    /// `tanh(√w)/√w`
    TanhcSqrt,
    /// `artanh(√w)/√w`, with `√w` clamped below 1
    ArtanhcSqrt,
    /// `sinh(√w)/√w`
    SinhcSqrt,
    /// `asinh(√w)/√w`
    AsinhcSqrt,
    /// `arcosh(a)²`, with `a` clamped to `[1, ∞)`
    ArcoshSq,
}

impl UnaryFn {
    pub fn value(self, x: f64) -> f64 {
        match self {
            UnaryFn::Neg => -x,
            UnaryFn::Exp => x.exp(),
            UnaryFn::Ln => x.ln(),
            UnaryFn::Sqrt => x.sqrt(),
            UnaryFn::Square => x * x,
            UnaryFn::Recip => 1.0 / x,
            UnaryFn::Tanh => x.tanh(),
            UnaryFn::Relu => x.max(0.0),
            UnaryFn::Softplus => softplus(x),
            UnaryFn::Scale(s) => s * x,
            UnaryFn::AddScalar(s) => x + s,
            UnaryFn::ClampMax(hi) => x.min(hi),
            UnaryFn::ClampMin(lo) => x.max(lo),
            UnaryFn::TanhcSqrt => tanhc_sqrt(x.max(0.0)).0,
            UnaryFn::ArtanhcSqrt => artanhc_sqrt(x.max(0.0)).0,
            UnaryFn::SinhcSqrt => sinhc_sqrt(x.max(0.0)).0,
            UnaryFn::AsinhcSqrt => asinhc_sqrt(x.max(0.0)).0,
            UnaryFn::ArcoshSq => arcosh_sq(x).0,
        }
    }

    /// Derivative at `x`, given the already computed output `y`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryFn::Neg => -1.0,
            UnaryFn::Exp => y,
            UnaryFn::Ln => 1.0 / x,
            UnaryFn::Sqrt => 0.5 / y,
            UnaryFn::Square => 2.0 * x,
            UnaryFn::Recip => -y * y,
            UnaryFn::Tanh => 1.0 - y * y,
            UnaryFn::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::Softplus => sigmoid(x),
            UnaryFn::Scale(s) => s,
            UnaryFn::AddScalar(_) => 1.0,
            UnaryFn::ClampMax(hi) => {
                if x < hi {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::ClampMin(lo) => {
                if x > lo {
                    1.0
                } else {
                    0.0
                }
            }
            UnaryFn::TanhcSqrt => {
                if x < 0.0 {
                    0.0
                } else {
                    tanhc_sqrt(x).1
                }
            }
            UnaryFn::ArtanhcSqrt => {
                if x < 0.0 || x.sqrt() >= 1.0 - ARTANH_EPS {
                    0.0
                } else {
                    artanhc_sqrt(x).1
                }
            }
            UnaryFn::SinhcSqrt => {
                if x < 0.0 {
                    0.0
                } else {
                    sinhc_sqrt(x).1
                }
            }
            UnaryFn::AsinhcSqrt => {
                if x < 0.0 {
                    0.0
                } else {
                    asinhc_sqrt(x).1
                }
            }
            UnaryFn::ArcoshSq => arcosh_sq(x).1,
        }
    }
}

/// `ln(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive arguments.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `(tanh(s)/s, d/dw)` with `s = √w`.
pub fn tanhc_sqrt(w: f64) -> (f64, f64) {
    if w < SERIES_BELOW {
        let v = 1.0 - w / 3.0 + 2.0 * w * w / 15.0 - 17.0 * w * w * w / 315.0;
        let d = -1.0 / 3.0 + 4.0 * w / 15.0 - 17.0 * w * w / 105.0;
        (v, d)
    } else {
        let s = w.sqrt();
        let t = s.tanh();
        let sech2 = 1.0 - t * t;
        (t / s, (s * sech2 - t) / (2.0 * s * w))
    }
}

/// `(artanh(s)/s, d/dw)` with `s = min(√w, 1 - 1e-15)`.
pub fn artanhc_sqrt(w: f64) -> (f64, f64) {
    if w < SERIES_BELOW {
        let v = 1.0 + w / 3.0 + w * w / 5.0 + w * w * w / 7.0;
        let d = 1.0 / 3.0 + 2.0 * w / 5.0 + 3.0 * w * w / 7.0;
        (v, d)
    } else {
        let s = w.sqrt().min(1.0 - ARTANH_EPS);
        let w = s * s;
        let a = s.atanh();
        (a / s, (s / (1.0 - w) - a) / (2.0 * s * w))
    }
}

/// `(sinh(s)/s, d/dw)` with `s = √w`.
pub fn sinhc_sqrt(w: f64) -> (f64, f64) {
    if w < SERIES_BELOW {
        let v = 1.0 + w / 6.0 + w * w / 120.0 + w * w * w / 5040.0;
        let d = 1.0 / 6.0 + w / 60.0 + w * w / 1680.0;
        (v, d)
    } else {
        let s = w.sqrt();
        let sh = s.sinh();
        (sh / s, (s * s.cosh() - sh) / (2.0 * s * w))
    }
}

/// `(asinh(s)/s, d/dw)` with `s = √w`.
pub fn asinhc_sqrt(w: f64) -> (f64, f64) {
    if w < SERIES_BELOW {
        let v = 1.0 - w / 6.0 + 3.0 * w * w / 40.0 - 5.0 * w * w * w / 112.0;
        let d = -1.0 / 6.0 + 3.0 * w / 20.0 - 15.0 * w * w / 112.0;
        (v, d)
    } else {
        let s = w.sqrt();
        let a = s.asinh();
        (a / s, (s / (1.0 + w).sqrt() - a) / (2.0 * s * w))
    }
}

/// `(arcosh(a)², d/da)`; the argument is clamped to `a ≥ 1` with zero
/// gradient below the clamp. At `a = 1` the derivative is the limit 2.
pub fn arcosh_sq(a: f64) -> (f64, f64) {
    if a <= 1.0 {
        return (0.0, if a < 1.0 { 0.0 } else { 2.0 });
    }
    let e = a - 1.0;
    if e < 1e-8 {
        // arcosh(1+e)² = 2e - e²/3 + O(e³)
        (2.0 * e - e * e / 3.0, 2.0 - 2.0 * e / 3.0)
    } else {
        let t = a.acosh();
        (t * t, 2.0 * t / (a * a - 1.0).sqrt())
    }
}
