//! Reverse-mode differentiation for the network, plus its checking and
//! optimisation tools.

mod adam;
mod edges;
pub mod geom;
mod gradcheck;
pub mod scalar;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use edges::EdgeIndex;
pub use gradcheck::{grad_check, numeric_gradient};
pub use scalar::UnaryFn;
pub use tape::{blocked_matmul, Tape, Tensor, Var};
