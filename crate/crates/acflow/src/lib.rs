//! Flow-based generative models whose invertible transformations and
//! autoregressive latent likelihoods condition on an arbitrary observed
//! subset of covariates. Supports exact conditional/joint/marginal
//! log-likelihoods, multiple imputation by sampling, and a penalized single
//! best-guess imputation.
//!
//! The numerical core is generic over the scalar type ([`scalar::Real`],
//! implemented for `f32` and `f64`); the aliases below pin the
//! double-precision instantiations used by the CLI and the checkpoint
//! format.

pub mod arch;
pub mod context;
pub mod diff;
pub mod error;
pub mod likelihood;
pub mod mask;
pub mod model;
pub mod scalar;
pub mod standardize;
pub mod tensor;
pub mod transform;

pub use error::{Error, Result};

/// Double-precision tensor, the working type of the CLI and checkpoints.
pub type Tensor64 = tensor::Tensor<f64>;
/// Double-precision graph node.
pub type Node64 = diff::Node<f64>;
/// Double-precision model as used by the CLI and the checkpoint format.
pub type Model = model::AcflowModel<f64>;
/// Double-precision conditioning context.
pub type Context = context::ConditioningContext<f64>;
