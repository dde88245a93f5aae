//! Arbitrary-conditional affine coupling.
//!
//! The target vector is split even-odd into a kept part A and a transformed
//! part B. Scale and shift for B come from a shared-trunk network over the
//! composed context `(x_c, b_c)`, with the d-dimensional outputs indexed
//! down to the B positions.

use rand::Rng;

use crate::context::CtxNodes;
use crate::diff::nn::{FinalInit, Mlp};
use crate::diff::{Node, ParamStore};
use crate::error::Result;
use crate::mask::{zero_impute, BitMask};
use crate::scalar::Real;

use super::clamped_log_scale;

pub struct AffineCoupling {
    /// Shared trunk, two heads stacked: outputs `[S; T]`, each length d.
    net: Mlp,
    clamp: f64,
    d: usize,
}

/// Fixed even-odd split over the target positions: the 1st, 3rd, ...
/// target dims form the kept group A.
fn even_odd_split(n_targets: usize) -> BitMask {
    BitMask::from_bools(&(0..n_targets).map(|i| i % 2 == 0).collect::<Vec<_>>())
}

impl AffineCoupling {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        hidden: usize,
        mlp_layers: usize,
        clamp: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // Zero-initialized output => s = 1, t = 0: the identity map.
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
        Ok(AffineCoupling { net, clamp, d })
    }

    /// Scale/shift for the B part, as functions of (x_uA, ctx) only.
    fn scale_shift<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_ua: &Node<F>,
        b_u: &BitMask,
        not_b_u: &BitMask,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>, Node<F>)> {
        // x_c = embed(embed(x_uA; b_u); target) + phi(x_o; b)
        let x_c = x_ua
            .embed_mask(b_u)?
            .embed_mask(&ctx.target)?
            .add(&ctx.phi)?;
        // b_c = embed(b_u; target) + b  (constant bits)
        let b_u_real: Vec<F> = b_u.to_real_vec();
        let embedded = zero_impute(&b_u_real, &ctx.target)?;
        let b_c: Vec<F> = embedded
            .iter()
            .zip(ctx.b.bits().iter())
            .map(|(&a, &bb)| if a > F::zero() || bb == 1 { F::one() } else { F::zero() })
            .collect();
        let inp = Node::concat(&[&x_c, &Node::vector_const(b_c)])?;
        let st = self.net.forward(store, &inp)?;
        let s_raw = st
            .slice(0, self.d)?
            .index_mask(&ctx.target)?
            .index_mask(not_b_u)?;
        let t = st
            .slice(self.d, 2 * self.d)?
            .index_mask(&ctx.target)?
            .index_mask(not_b_u)?;
        let log_s = clamped_log_scale(&s_raw, self.clamp);
        Ok((log_s.exp(), t, log_s))
    }

    pub fn forward<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        let n = ctx.n_targets();
        let b_u = even_odd_split(n);
        let not_b_u = b_u.complement();
        if not_b_u.popcount() == 0 {
            // 0 or 1 target dims: nothing to transform.
            return Ok((x_u.clone(), Node::scalar_const(F::zero())));
        }
        let x_ua = x_u.index_mask(&b_u)?;
        let x_ub = x_u.index_mask(&not_b_u)?;
        let (s, t, log_s) = self.scale_shift(store, &x_ua, &b_u, &not_b_u, ctx)?;
        let z_b = x_ub.mul(&s)?.add(&t)?;
        let z = x_ua.embed_mask(&b_u)?.add(&z_b.embed_mask(&not_b_u)?)?;
        Ok((z, log_s.sum()))
    }

    pub fn inverse<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        let n = ctx.n_targets();
        let b_u = even_odd_split(n);
        let not_b_u = b_u.complement();
        if not_b_u.popcount() == 0 {
            return Ok(z_u.clone());
        }
        // The kept part passes through unchanged, so s and t are recomputable.
        let x_ua = z_u.index_mask(&b_u)?;
        let z_b = z_u.index_mask(&not_b_u)?;
        let (s, t, _log_s) = self.scale_shift(store, &x_ua, &b_u, &not_b_u, ctx)?;
        let x_b = z_b.sub(&t)?.div(&s)?;
        x_ua.embed_mask(&b_u)?.add(&x_b.embed_mask(&not_b_u)?)
    }
}
