//! Latent-space conditional densities p(z_u | x_o, b): a diagonal Gaussian
//! base and an autoregressive Gaussian-mixture base.

mod ar;
mod gaussian;
pub mod gmm;

pub use ar::AutoregressiveGmm;
pub use gaussian::GaussianLikelihood;
pub use gmm::{gmm_log_prob, GmmParams};

use rand::Rng;

use crate::context::CtxNodes;
use crate::diff::{Node, ParamStore};
use crate::error::Result;
use crate::scalar::Real;

/// The latent likelihood at the top of the flow.
pub enum BaseLikelihood {
    Gaussian(GaussianLikelihood),
    ArGmm(AutoregressiveGmm),
}

impl BaseLikelihood {
    pub fn kind(&self) -> &'static str {
        match self {
            BaseLikelihood::Gaussian(_) => "gaussian",
            BaseLikelihood::ArGmm(_) => "autoregressive_gmm",
        }
    }

    pub fn log_prob<F: Real>(
        &self,
        store: &ParamStore<F>,
        z: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        match self {
            BaseLikelihood::Gaussian(b) => b.log_prob(store, z, ctx),
            BaseLikelihood::ArGmm(b) => b.log_prob(store, z, ctx),
        }
    }

    pub fn sample<F: Real>(
        &self,
        store: &ParamStore<F>,
        ctx: &CtxNodes<F>,
        rng: &mut impl Rng,
    ) -> Result<Vec<F>> {
        match self {
            BaseLikelihood::Gaussian(b) => b.sample(store, ctx, rng),
            BaseLikelihood::ArGmm(b) => b.sample(store, ctx, rng),
        }
    }

    /// Latent mean: exact for the Gaussian base, greedy mean propagation for
    /// the autoregressive mixture.
    pub fn mean<F: Real>(&self, store: &ParamStore<F>, ctx: &CtxNodes<F>) -> Result<Node<F>> {
        match self {
            BaseLikelihood::Gaussian(b) => b.mean(store, ctx),
            BaseLikelihood::ArGmm(b) => b.mean(store, ctx),
        }
    }
}
