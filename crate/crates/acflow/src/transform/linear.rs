//! Conditional linear transformation: `z_u = W x_u + t` with `W` and `t`
//! produced by a context network over `(phi(x_o; b), b)` and indexed down to
//! the target dimensions. A learnable base matrix (initialized to the
//! identity) is added to the context output before indexing; singular or
//! ill-conditioned `W` surfaces as a structured numerical error rather than
//! being silently regularized.

use rand::Rng;

use crate::context::CtxNodes;
use crate::diff::nn::{FinalInit, Mlp};
use crate::diff::{Node, ParamId, ParamStore};
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

pub struct ConditionalLinear {
    net: Mlp,
    base: ParamId,
    d: usize,
    /// Rank of the factored parametrization; `rank == d` emits the full
    /// d*d matrix directly.
    rank: usize,
}

impl ConditionalLinear {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        hidden: usize,
        mlp_layers: usize,
        rank: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let rank = rank.min(d).max(1);
        let out_dim = if rank < d { 2 * d * rank + d } else { d * d + d };
        // Small final init keeps W close to the identity base at start.
        let net = Mlp::init(
            store,
            &format!("{name}.net"),
            2 * d,
            hidden,
            mlp_layers,
            out_dim,
            FinalInit::Randn(0.01),
            rng,
        )?;
        let base = store.add(format!("{name}.base"), Tensor::<F>::eye(d), true)?;
        Ok(ConditionalLinear { net, base, d, rank })
    }

    /// Assemble the indexed weight matrix and shift for the current context.
    fn weight_shift<F: Real>(
        &self,
        store: &ParamStore<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        let d = self.d;
        let out = self.net.forward(store, &ctx.net_input()?)?;
        let (w_f, t_f) = if self.rank < d {
            let r = self.rank;
            let u = out.slice(0, d * r)?.reshape(vec![d, r])?;
            let v = out.slice(d * r, 2 * d * r)?.reshape(vec![r, d])?;
            (u.matmul(&v)?, out.slice(2 * d * r, 2 * d * r + d)?)
        } else {
            (
                out.slice(0, d * d)?.reshape(vec![d, d])?,
                out.slice(d * d, d * d + d)?,
            )
        };
        let w_full = w_f.add(&store.leaf(self.base))?;
        let w = w_full.index_mask2(&ctx.target, &ctx.target)?;
        let t = t_f.index_mask(&ctx.target)?;
        Ok((w, t))
    }

    pub fn forward<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        if ctx.n_targets() == 0 {
            return Ok((x_u.clone(), Node::scalar_const(F::zero())));
        }
        let (w, t) = self.weight_shift(store, ctx)?;
        let logdet = Node::logabsdet(&w)?;
        let z = w.matmul(x_u)?.add(&t)?;
        Ok((z, logdet))
    }

    pub fn inverse<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        if ctx.n_targets() == 0 {
            return Ok(z_u.clone());
        }
        let (w, t) = self.weight_shift(store, ctx)?;
        Node::solve(&w, &z_u.sub(&t)?)
    }

    /// The learnable full-rank base matrix (tests pin it directly).
    pub fn base_param(&self) -> ParamId {
        self.base
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }
}
