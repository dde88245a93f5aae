//! RNN coupling: transforms each target dimension sequentially. Step i sees
//! `concat(x_u^{i-1}, phi(x_o; b), b)` with `x_u^0 = -1` and `h^0 = 0`; a
//! shared head maps the RNN output to a shift and a raw log-scale. The
//! inverse is sequential too: scale and shift at step i depend only on the
//! already-recovered dimensions.

use rand::Rng;

use crate::context::CtxNodes;
use crate::diff::nn::{FinalInit, GruStack, Mlp};
use crate::diff::{Node, ParamStore};
use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::clamped_log_scale;

pub struct RnnCoupling {
    gru: GruStack,
    /// hidden -> [shift, raw log-scale]
    head: Mlp,
    clamp: f64,
}

impl RnnCoupling {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        hidden: usize,
        rnn_layers: usize,
        clamp: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let gru = GruStack::init(store, &format!("{name}.rnn"), 1 + 2 * d, hidden, rnn_layers, rng)?;
        let head = Mlp::init(
            store,
            &format!("{name}.head"),
            hidden,
            hidden,
            0,
            2,
            FinalInit::Zeros,
            rng,
        )?;
        Ok(RnnCoupling { gru, head, clamp })
    }

    fn step_params<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_prev: &Node<F>,
        ctx: &CtxNodes<F>,
        state: &mut Vec<Node<F>>,
    ) -> Result<(Node<F>, Node<F>)> {
        let inp = Node::concat(&[x_prev, &ctx.phi, &ctx.b_vec])?;
        let o = self.gru.step(store, &inp, state)?;
        let raw = self.head.forward(store, &o)?;
        let shift = raw.get(0)?;
        let log_s = clamped_log_scale(&raw.get(1)?, self.clamp);
        Ok((shift, log_s))
    }

    pub fn forward<F: Real>(
        &self,
        store: &ParamStore<F>,
        x_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<(Node<F>, Node<F>)> {
        let n = ctx.n_targets();
        if n == 0 {
            return Ok((x_u.clone(), Node::scalar_const(F::zero())));
        }
        let mut state = self.gru.zero_state();
        let mut x_prev = Node::constant(Tensor::vector(vec![-F::one()]));
        let mut zs = Vec::with_capacity(n);
        let mut log_dets = Vec::with_capacity(n);
        for i in 0..n {
            let (shift, log_s) = self.step_params(store, &x_prev, ctx, &mut state)?;
            let x_i = x_u.get(i)?;
            zs.push(x_i.mul(&log_s.exp())?.add(&shift)?);
            log_dets.push(log_s);
            x_prev = x_i;
        }
        let z = Node::concat(&zs.iter().collect::<Vec<_>>())?;
        let logdet = Node::concat(&log_dets.iter().collect::<Vec<_>>())?.sum();
        Ok((z, logdet))
    }

    pub fn inverse<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_u: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        let n = ctx.n_targets();
        if n == 0 {
            return Ok(z_u.clone());
        }
        let mut state = self.gru.zero_state();
        let mut x_prev = Node::constant(Tensor::vector(vec![-F::one()]));
        let mut xs = Vec::with_capacity(n);
        for i in 0..n {
            let (shift, log_s) = self.step_params(store, &x_prev, ctx, &mut state)?;
            let x_i = z_u.get(i)?.sub(&shift)?.div(&log_s.exp())?;
            xs.push(x_i.clone());
            x_prev = x_i;
        }
        Node::concat(&xs.iter().collect::<Vec<_>>())
    }
}
