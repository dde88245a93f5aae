//! Reverse-mode differentiable computation substrate. Everything trainable
//! in the crate is built from these pieces.

mod graph;
pub mod nn;
mod ops;

pub use graph::{backward, Gradients, Node, ParamEntry, ParamId, ParamStore};
pub use ops::{logsumexp_slice, sigmoid_scalar, softmax_tensor, softplus_scalar};
