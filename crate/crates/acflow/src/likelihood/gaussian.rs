//! Diagonal Gaussian latent likelihood. A context network over
//! `(phi(x_o; b), b)` emits per-dimension mean and log-scale; both are
//! indexed down to the target dimensions. Equivalent to one more linear
//! transform, and the one base whose mean is exact.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::context::CtxNodes;
use crate::diff::nn::{FinalInit, Mlp};
use crate::diff::{Node, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

pub struct GaussianLikelihood {
    pub(crate) net: Mlp,
    d: usize,
}

impl GaussianLikelihood {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        hidden: usize,
        mlp_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // Zero-initialized head => mean 0, log-scale 0: a standard normal.
        let net = Mlp::init(
            store,
            &format!("{name}.net"),
            2 * d,
            hidden,
            mlp_layers,
            2 * d,
            FinalInit::Zeros,
            rng,
        )?;
        Ok(GaussianLikelihood { net, d })
    }

    /// (mean, log-scale) over the target dimensions.
    fn params<F: Real>(
        &self,
        store: &ParamStore<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        let out = self.net.forward(store, &ctx.net_input()?)?;
        let mu = out.slice(0, self.d)?.index_mask(&ctx.target)?;
        let log_sigma = out.slice(self.d, 2 * self.d)?.index_mask(&ctx.target)?;
        Ok((mu, log_sigma))
    }

    pub fn log_prob<F: Real>(
        &self,
        store: &ParamStore<F>,
        z: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        let n = ctx.n_targets();
        if z.numel() != n {
            return Err(Error::Shape {
                op: "gaussian_log_prob",
                details: format!("z has {} entries for {} target dims", z.numel(), n),
            });
        }
        if n == 0 {
            return Ok(Node::scalar_const(F::zero()));
        }
        let (mu, log_sigma) = self.params(store, ctx)?;
        let zn = z.sub(&mu)?.mul(&log_sigma.neg().exp())?;
        let half_ln_two_pi = F::ln_two_pi() * F::cast(0.5);
        Ok(zn
            .square()
            .scale(F::cast(-0.5))
            .sub(&log_sigma)?
            .shift(-half_ln_two_pi)
            .sum())
    }

    pub fn sample<F: Real>(
        &self,
        store: &ParamStore<F>,
        ctx: &CtxNodes<F>,
        rng: &mut impl Rng,
    ) -> Result<Vec<F>> {
        let n = ctx.n_targets();
        if n == 0 {
            return Ok(Vec::new());
        }
        let (mu, log_sigma) = self.params(store, ctx)?;
        Ok(mu
            .value()
            .data()
            .iter()
            .zip(log_sigma.value().data().iter())
            .map(|(&m, &ls)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + ls.exp() * F::cast(eps)
            })
            .collect())
    }

    /// Exact mean: the head's location output.
    pub fn mean<F: Real>(&self, store: &ParamStore<F>, ctx: &CtxNodes<F>) -> Result<Node<F>> {
        if ctx.n_targets() == 0 {
            return Ok(Node::constant(Tensor::vector(Vec::new())));
        }
        Ok(self.params(store, ctx)?.0)
    }
}
