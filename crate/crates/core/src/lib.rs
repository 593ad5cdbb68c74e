//! Hyperbolic graph convolutional auto-encoders.
//!
//! The crate is organised bottom-up:
//!
//! - [`manifold`]: closed-form Poincaré ball and hyperboloid geometry on plain vectors.
//! - [`diffcore`]: a small reverse-mode autodiff tape over dense matrices, the
//!   differentiable versions of the geometry used by the network, a
//!   finite-difference gradient checker and Adam.
//! - [`graphio`]: graph loading, mutual-kNN construction, edge splits and negative sampling.
//! - [`model`]: the auto-encoder itself (attention message passing with per-layer
//!   curvature, Fermi-Dirac edge decoder, composite loss, checkpoints).
//! - [`train`]: the full-batch training loop.
//! - [`eval`]: link-prediction and clustering metrics, k-means in tangent space and
//!   hyperbolic-distance-from-origin ranking.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod diffcore;
pub mod error;
pub mod eval;
pub mod graphio;
pub mod manifold;
pub mod model;
pub mod par;
pub mod rng;
pub mod train;

pub use error::{Error, Result};

/// Library version, recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
