//! The conditioning bundle every transform and latent likelihood receives.

use crate::diff::Node;
use crate::error::{Error, Result};
use crate::mask::{BitMask, MaskedVector};
use crate::scalar::Real;

/// Observed values `x_o`, observed mask `b` (carried by `x_o`), and
/// non-missing mask `m`. The dimensions being modeled are `m & !b`.
#[derive(Clone, Debug)]
pub struct ConditioningContext<F: Real = f64> {
    x_o: MaskedVector<F>,
    m: BitMask,
}

impl<F: Real> ConditioningContext<F> {
    pub fn new(x_o: MaskedVector<F>, m: BitMask) -> Result<Self> {
        if x_o.full_dim() != m.len() {
            return Err(Error::Mask(format!(
                "observed mask has length {} but non-missing mask has length {}",
                x_o.full_dim(),
                m.len()
            )));
        }
        if !x_o.mask().is_subset_of(&m) {
            return Err(Error::Mask(
                "context marks a missing dimension as observed (b & !m != 0)".into(),
            ));
        }
        if x_o.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("observed values must be finite".into()));
        }
        Ok(ConditioningContext { x_o, m })
    }

    /// Complete-data context: nothing missing.
    pub fn complete(x_o: MaskedVector<F>) -> Result<Self> {
        let m = BitMask::ones(x_o.full_dim());
        Self::new(x_o, m)
    }

    /// Extract the observed part of a full vector: `x_o = x[b]`, `m = 1`.
    pub fn from_full(x: &[F], b: &BitMask) -> Result<Self> {
        let values = crate::mask::index_vec(x, b)?;
        Self::complete(MaskedVector::new(values, b.clone())?)
    }

    /// Empty-conditioning context over the dims marked in `m` — the joint
    /// (`m` all ones) and marginal (`m` = query) special cases.
    pub fn unconditional(m: BitMask) -> Result<Self> {
        Self::new(MaskedVector::empty(m.len()), m)
    }

    pub fn x_o(&self) -> &MaskedVector<F> {
        &self.x_o
    }

    pub fn b(&self) -> &BitMask {
        self.x_o.mask()
    }

    pub fn m(&self) -> &BitMask {
        &self.m
    }

    /// Mask of the dimensions being modeled: `m & !b`.
    pub fn target(&self) -> BitMask {
        self.m.minus(self.b())
    }

    pub fn d(&self) -> usize {
        self.m.len()
    }
}

/// Graph-side constants for one forward/inverse/likelihood pass, built once
/// from a (standardized) context and shared by every layer.
pub struct CtxNodes<F: Real = f64> {
    /// Zero-imputed observed vector, length d.
    pub phi: Node<F>,
    /// Observed mask as reals, length d.
    pub b_vec: Node<F>,
    pub b: BitMask,
    pub m: BitMask,
    /// `m & !b`.
    pub target: BitMask,
    pub d: usize,
}

impl<F: Real> CtxNodes<F> {
    pub fn new(ctx: &ConditioningContext<F>) -> Self {
        CtxNodes {
            phi: Node::vector_const(ctx.x_o().zero_imputed()),
            b_vec: Node::vector_const(ctx.b().to_real_vec()),
            b: ctx.b().clone(),
            m: ctx.m().clone(),
            target: ctx.target(),
            d: ctx.d(),
        }
    }

    /// The shared conditioning input `concat(phi(x_o; b), b)`.
    pub fn net_input(&self) -> Result<Node<F>> {
        Node::concat(&[&self.phi, &self.b_vec])
    }

    pub fn n_targets(&self) -> usize {
        self.target.popcount()
    }
}
