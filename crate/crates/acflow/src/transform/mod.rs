//! Invertible conditional transformations on the target covariates, with
//! exact log-determinant Jacobians, and their composition.

mod affine;
mod linear;
mod rnn;
mod simple;

pub use affine::AffineCoupling;
pub use linear::ConditionalLinear;
pub use rnn::RnnCoupling;
pub use simple::{LeakyRelu, Reverse};

use crate::context::CtxNodes;
use crate::diff::{Node, ParamStore};
use crate::error::Result;
use crate::scalar::Real;

/// Output of a forward transform: the mapped vector and log |det J|.
pub struct TransformResult<F: Real = f64> {
    pub output: Node<F>,
    pub logdet: Node<F>,
}

/// One invertible conditional transform.
pub enum Transform {
    AffineCoupling(AffineCoupling),
    Linear(ConditionalLinear),
    RnnCoupling(RnnCoupling),
    LeakyRelu(LeakyRelu),
    Reverse(Reverse),
}

impl Transform {
    pub fn kind(&self) -> &'static str {
        match self {
            Transform::AffineCoupling(_) => "affine_coupling",
            Transform::Linear(_) => "linear",
            Transform::RnnCoupling(_) => "rnn_coupling",
            Transform::LeakyRelu(_) => "leaky_relu",
            Transform::Reverse(_) => "reverse",
        }
    }

    pub fn forward<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        match self {
            Transform::AffineCoupling(t) => t.forward(store, x_u, ctx),
            Transform::Linear(t) => t.forward(store, x_u, ctx),
            Transform::RnnCoupling(t) => t.forward(store, x_u, ctx),
            Transform::LeakyRelu(t) => t.forward(x_u),
            Transform::Reverse(t) => t.forward(x_u),
        }
    }

    pub fn inverse<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        match self {
            Transform::AffineCoupling(t) => t.inverse(store, z_u, ctx),
            Transform::Linear(t) => t.inverse(store, z_u, ctx),
            Transform::RnnCoupling(t) => t.inverse(store, z_u, ctx),
            Transform::LeakyRelu(t) => t.inverse(z_u),
            Transform::Reverse(t) => t.inverse(z_u),
        }
    }
}

/// Ordered composition of transforms. The stack log-det is the sum of the
/// member log-dets; the inverse applies member inverses in reverse order.
pub struct TransformStack {
    items: Vec<Transform>,
}

impl TransformStack {
    pub fn new(items: Vec<Transform>) -> Self {
        TransformStack { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Transform] {
        &self.items
    }

    pub fn forward<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<TransformResult<F>> {
        let mut out = x_u.clone();
        let mut logdet = Node::scalar_const(F::zero());
        for (i, t) in self.items.iter().enumerate() {
            let (next, ld) = t
                .forward(store, &out, ctx)
                .map_err(|e| e.with_transform_index(i))?;
            out = next;
            logdet = logdet.add(&ld)?;
        }
        Ok(TransformResult { output: out, logdet })
    }

    pub fn inverse<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        let mut out = z_u.clone();
        for (i, t) in self.items.iter().enumerate().rev() {
            out = t
                .inverse(store, &out, ctx)
                .map_err(|e| e.with_transform_index(i))?;
        }
        Ok(out)
    }
}

/// s = exp(c * tanh(raw / c)): strictly positive with |log s| <= c.
pub(crate) fn clamped_log_scale<F: Real>(raw: &Node<F>, clamp: f64) -> Node<F> {
    let c = F::cast(clamp);
    raw.scale(F::one() / c).tanh().scale(c)
}
