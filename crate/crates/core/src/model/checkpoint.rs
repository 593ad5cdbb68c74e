//! Model checkpoints as JSON.
//!
//! Layout (version 1):
//!
//! ```text
//! {
//!   "format": "hgcae-checkpoint",
//!   "version": 1,
//!   "config": { "manifold": "poincare" | "hyperboloid", "input_dim", "hidden_dim",
//!               "latent_dim", "activation", "lambda", "fermi_r", "fermi_t",
//!               "use_attention", "reconstruct_x", "learn_curvature", "curvature" },
//!   "layers": [ { "w": [[...], ...],   // d_out rows of d_in values
//!                 "b": [...],          // d_out values
//!                 "beta", "gamma", "c_raw",
//!                 "curvature" }, ... ],  // K of the layer, informational
//!   "epoch": 123,
//!   "seed": 0
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is exact.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{LayerParams, Model, ModelConfig};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hgcae-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub beta: f64,
    pub gamma: f64,
    pub c_raw: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub layers: Vec<LayerRecord>,
    /// Epoch the parameters come from (1-based; 0 for an untrained model).
    #[serde(default)]
    pub epoch: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model(model: &Model, epoch: usize, seed: u64) -> Self {
        let layers = model
            .layers
            .iter()
            .zip(model.curvatures())
            .map(|(l, k)| LayerRecord {
                w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                b: l.b.row(0).to_vec(),
                beta: l.beta,
                gamma: l.gamma,
                c_raw: l.c_raw,
                curvature: k,
            })
            .collect();
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            layers,
            epoch,
            seed,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        let bad = |m: String| Error::Checkpoint(m);
        if self.format != CHECKPOINT_FORMAT {
            return Err(bad(format!("unknown format {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {}", self.version)));
        }
        self.config.validate()?;
        let dims = self.config.layer_dims();
        if self.layers.len() != dims.len() {
            return Err(bad(format!(
                "expected {} layers, found {}",
                dims.len(),
                self.layers.len()
            )));
        }
        let mut layers = Vec::with_capacity(dims.len());
        for (i, (rec, &(din, dout))) in self.layers.iter().zip(&dims).enumerate() {
            if rec.w.len() != dout || rec.w.iter().any(|r| r.len() != din) || rec.b.len() != dout {
                return Err(bad(format!(
                    "layer {i}: expected W {dout}x{din} and b of {dout}"
                )));
            }
            let flat: Vec<f64> = rec.w.iter().flatten().copied().collect();
            let w = Array2::from_shape_vec((dout, din), flat).expect("checked shape");
            let b = Array2::from_shape_vec((1, dout), rec.b.clone()).expect("checked shape");
            let p = LayerParams {
                w,
                b,
                beta: rec.beta,
                gamma: rec.gamma,
                c_raw: rec.c_raw,
            };
            let finite = p.w.iter().chain(p.b.iter()).all(|v| v.is_finite())
                && [p.beta, p.gamma, p.c_raw].iter().all(|v| v.is_finite());
            if !finite {
                return Err(bad(format!("layer {i}: non-finite parameters")));
            }
            layers.push(p);
        }
        Ok(Model {
            config: self.config.clone(),
            layers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }
}
