//! The auto-encoder: input lifting, attention message passing with a
//! trainable curvature per layer, curvature-transition activations, the
//! Fermi-Dirac edge decoder and the joint reconstruction loss.
//!
//! The network always has two encoder and two decoder layers with widths
//! `d_in → d_hidden → d_latent → d_hidden → d_in`. Edges are reconstructed
//! from the encoder output, attributes from the decoder output.

mod checkpoint;
mod forward;

pub use checkpoint::{Checkpoint, LayerRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use forward::{
    activation_transition, attention_weights, fermi_dirac_prob, forward, lift_input, loss,
    message_pass, ForwardVars, LayerVars, LossVars, ParamVars,
};

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::scalar::{softplus, softplus_inv};
use crate::diffcore::Tensor;
use crate::manifold::{self, Curvature, ManifoldKind, ManifoldPoint, MAX_ABS_CURVATURE};
use crate::{rng, Error, Result};

pub const NUM_LAYERS: usize = 4;
pub const NUM_ENCODER_LAYERS: usize = 2;
/// Offset in `K = -softplus(c) - CURVATURE_FLOOR`.
pub const CURVATURE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "none" => Ok(Activation::Identity),
            _ => Err(Error::contract(format!("unknown activation {s:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub manifold: ManifoldKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub activation: Activation,
    /// Weight of the attribute reconstruction term.
    pub lambda: f64,
    pub fermi_r: f64,
    pub fermi_t: f64,
    pub use_attention: bool,
    pub reconstruct_x: bool,
    pub learn_curvature: bool,
    /// Starting curvature when learned, the fixed value otherwise.
    pub curvature: f64,
}

impl ModelConfig {
    pub fn new(manifold: ManifoldKind, input_dim: usize) -> Self {
        ModelConfig {
            manifold,
            input_dim,
            hidden_dim: 64,
            latent_dim: 16,
            activation: Activation::Relu,
            lambda: 1.0,
            fermi_r: 2.0,
            fermi_t: 1.0,
            use_attention: true,
            reconstruct_x: true,
            learn_curvature: true,
            curvature: -1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.latent_dim == 0 {
            return Err(Error::contract("layer dimensions must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::contract(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.fermi_t > 0.0 && self.fermi_t.is_finite()) {
            return Err(Error::contract(format!(
                "fermi t must be > 0, got {}",
                self.fermi_t
            )));
        }
        if !self.fermi_r.is_finite() {
            return Err(Error::contract("fermi r must be finite"));
        }
        if self.learn_curvature {
            let k = self.curvature;
            if !(-MAX_ABS_CURVATURE..-CURVATURE_FLOOR).contains(&k) {
                return Err(Error::contract(format!(
                    "a learned curvature must start in [-{MAX_ABS_CURVATURE}, -{CURVATURE_FLOOR}), got {k}"
                )));
            }
        } else {
            Curvature::new(self.curvature)?;
        }
        Ok(())
    }

    /// λ as used in the loss: zero when attribute reconstruction is off.
    pub fn effective_lambda(&self) -> f64 {
        if self.reconstruct_x {
            self.lambda
        } else {
            0.0
        }
    }

    /// `(d_in, d_out)` of each layer.
    pub fn layer_dims(&self) -> [(usize, usize); NUM_LAYERS] {
        let (a, b, c) = (self.input_dim, self.hidden_dim, self.latent_dim);
        [(a, b), (b, c), (c, b), (b, a)]
    }
}

/// Trainable parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `d_out × d_in`; the layer computes `y = W x + b` on tangent rows.
    pub w: Array2<f64>,
    /// `1 × d_out`.
    pub b: Array2<f64>,
    pub beta: f64,
    pub gamma: f64,
    /// Raw curvature parameter, `K = -softplus(c_raw) - 1e-3` clamped to `|K| <= 100`.
    pub c_raw: f64,
}

impl LayerParams {
    pub fn d_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.w.nrows()
    }
}

/// `c = -K` from the raw parameter.
pub fn abs_curvature_from_raw(c_raw: f64) -> f64 {
    (softplus(c_raw) + CURVATURE_FLOOR).min(MAX_ABS_CURVATURE)
}

/// Raw parameter that yields curvature `k`.
pub fn raw_from_curvature(k: f64) -> f64 {
    softplus_inv(-k - CURVATURE_FLOOR)
}

/// Rows of manifold points sharing one curvature. On the hyperboloid each
/// row holds the ambient coordinates `(x₀, x₁, …, xₙ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    kind: ManifoldKind,
    curvature: Curvature,
    coords: Array2<f64>,
}

impl NodeStates {
    /// Validates every row against the manifold invariant.
    pub fn new(kind: ManifoldKind, curvature: Curvature, coords: Array2<f64>) -> Result<Self> {
        for (i, row) in coords.rows().into_iter().enumerate() {
            ManifoldPoint::new(kind, row.to_vec(), curvature)
                .map_err(|e| Error::contract(format!("row {i}: {e}")))?;
        }
        Ok(NodeStates {
            kind,
            curvature,
            coords,
        })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn curvature(&self) -> Curvature {
        self.curvature
    }

    pub fn coords(&self) -> &Array2<f64> {
        &self.coords
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.nrows()
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match self.kind {
            ManifoldKind::PoincareBall => self.coords.ncols(),
            ManifoldKind::Hyperboloid => self.coords.ncols() - 1,
        }
    }

    pub fn point(&self, i: usize) -> ManifoldPoint {
        ManifoldPoint::new_unchecked(self.kind, self.coords.row(i).to_vec(), self.curvature)
    }

    /// `log_o` of every row, `N × dim`.
    pub fn log0(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_nodes(), self.dim()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.assign(&ndarray::Array1::from(manifold::log0(&self.point(i))));
        }
        out
    }

    /// Hyperbolic distance of every row from the origin.
    pub fn distances_from_origin(&self) -> Result<Vec<f64>> {
        (0..self.num_nodes())
            .map(|i| manifold::distance_from_origin(&self.point(i)))
            .collect()
    }
}

/// The full parameter set plus its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
}

const PARAM_SUFFIXES: [&str; 5] = ["w", "b", "beta", "gamma", "c"];

impl Model {
    /// Glorot-uniform weights, zero biases, `β = γ = 0`, curvature at the
    /// configured starting value. Draws from the `init` stream of `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, "init");
        let c_raw = if config.learn_curvature {
            raw_from_curvature(config.curvature)
        } else {
            0.0
        };
        let layers = config
            .layer_dims()
            .iter()
            .map(|&(din, dout)| {
                let s = (6.0 / (din + dout) as f64).sqrt();
                LayerParams {
                    w: Array2::from_shape_fn((dout, din), |_| r.random_range(-s..=s)),
                    b: Array2::zeros((1, dout)),
                    beta: 0.0,
                    gamma: 0.0,
                    c_raw,
                }
            })
            .collect();
        Ok(Model { config, layers })
    }

    /// Curvature `K` of every layer.
    pub fn curvatures(&self) -> Vec<f64> {
        self.layers
            .iter()
            .map(|l| self.layer_curvature(l))
            .collect()
    }

    fn layer_curvature(&self, l: &LayerParams) -> f64 {
        if self.config.learn_curvature {
            -abs_curvature_from_raw(l.c_raw)
        } else {
            self.config.curvature
        }
    }

    /// Parameter names in the order of [`Model::tensors`].
    pub fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|l| PARAM_SUFFIXES.iter().map(move |s| format!("layer{l}.{s}")))
            .collect()
    }

    /// All parameters as tensors, five per layer: `W, b, β, γ, c_raw`.
    pub fn tensors(&self) -> Vec<Tensor> {
        let s = |v: f64| Array2::from_elem((1, 1), v);
        self.layers
            .iter()
            .flat_map(|l| [l.w.clone(), l.b.clone(), s(l.beta), s(l.gamma), s(l.c_raw)])
            .collect()
    }

    pub fn set_tensors(&mut self, ts: &[Tensor]) -> Result<()> {
        if ts.len() != 5 * self.layers.len() {
            return Err(Error::contract("wrong number of parameter tensors"));
        }
        for (l, chunk) in self.layers.iter_mut().zip(ts.chunks(5)) {
            if chunk[0].dim() != l.w.dim() || chunk[1].dim() != l.b.dim() {
                return Err(Error::contract("parameter shape changed"));
            }
            l.w.assign(&chunk[0]);
            l.b.assign(&chunk[1]);
            l.beta = chunk[2][[0, 0]];
            l.gamma = chunk[3][[0, 0]];
            l.c_raw = chunk[4][[0, 0]];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
