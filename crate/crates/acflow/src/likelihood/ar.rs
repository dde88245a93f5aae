//! Autoregressive Gaussian-mixture latent likelihood. An RNN walks the
//! target dimensions in index order; a shared head maps each output to the
//! mixture parameters for that step's conditional. The first step consumes
//! the same -1 convention as the RNN coupling transform.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::context::CtxNodes;
use crate::diff::nn::{FinalInit, GruStack, Mlp};
use crate::diff::{Node, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::gmm::{self, gmm_log_prob_node, split_raw_params, RAW_SIGMA_UNIT};

pub struct AutoregressiveGmm {
    pub(crate) gru: GruStack,
    pub(crate) head: Mlp,
    k: usize,
}

impl AutoregressiveGmm {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        d: usize,
        components: usize,
        hidden: usize,
        rnn_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if components == 0 {
            return Err(Error::Config("mixture needs at least one component".into()));
        }
        let gru = GruStack::init(store, &format!("{name}.rnn"), 1 + 2 * d, hidden, rnn_layers, rng)?;
        let head = Mlp::init(
            store,
            &format!("{name}.head"),
            hidden,
            hidden,
            0,
            3 * components,
            FinalInit::Randn(0.01),
            rng,
        )?;
        // Spread the location biases and start scales at 1 so components are
        // distinguishable from the first gradient step.
        let mut bias = vec![F::zero(); 3 * components];
        for (i, b) in bias.iter_mut().take(components).enumerate() {
            let frac = if components == 1 {
                0.0
            } else {
                -1.5 + 3.0 * i as f64 / (components - 1) as f64
            };
            *b = F::cast(frac);
        }
        for b in bias.iter_mut().skip(components).take(components) {
            *b = F::cast(RAW_SIGMA_UNIT);
        }
        store.set_value(head.output_bias(), Tensor::vector(bias))?;
        Ok(AutoregressiveGmm { gru, head, k: components })
    }

    pub fn components(&self) -> usize {
        self.k
    }

    /// Raw head output `[3k]` for one step.
    pub(crate) fn step_raw<F: Real>(
        &self,
        store: &ParamStore<F>,
        z_prev: &Node<F>,
        ctx: &CtxNodes<F>,
        state: &mut Vec<Node<F>>,
    ) -> Result<Node<F>> {
        let inp = Node::concat(&[z_prev, &ctx.phi, &ctx.b_vec])?;
        let o = self.gru.step(store, &inp, state)?;
        self.head.forward(store, &o)
    }

    /// Teacher-forced log-likelihood of `z` (length = target count);
    /// the empty product gives 0.
    pub fn log_prob<F: Real>(
        &self,
        store: &ParamStore<F>,
        z: &Node<F>,
        ctx: &CtxNodes<F>,
    ) -> Result<Node<F>> {
        let n = ctx.n_targets();
        if z.numel() != n {
            return Err(Error::Shape {
                op: "ar_log_prob",
                details: format!("z has {} entries for {} target dims", z.numel(), n),
            });
        }
        let mut total = Node::scalar_const(F::zero());
        if n == 0 {
            return Ok(total);
        }
        let mut state = self.gru.zero_state();
        let mut z_prev = Node::constant(Tensor::vector(vec![-F::one()]));
        for i in 0..n {
            let raw = self.step_raw(store, &z_prev, ctx, &mut state)?;
            let z_i = z.get(i)?;
            total = total.add(&gmm_log_prob_node(&z_i, &raw, self.k)?)?;
            z_prev = z_i;
        }
        Ok(total)
    }

    /// Ancestral sampling: draw a component per softmax weight, then a
    /// Gaussian draw, feeding each sampled value back in.
    pub fn sample<F: Real>(
        &self,
        store: &ParamStore<F>,
        ctx: &CtxNodes<F>,
        rng: &mut impl Rng,
    ) -> Result<Vec<F>> {
        let n = ctx.n_targets();
        let mut out = Vec::with_capacity(n);
        if n == 0 {
            return Ok(out);
        }
        let mut state = self.gru.zero_state();
        let mut z_prev = Node::constant(Tensor::vector(vec![-F::one()]));
        for _ in 0..n {
            let raw = self.step_raw(store, &z_prev, ctx, &mut state)?;
            let params = gmm::params_from_raw(raw.value().data(), self.k)?;
            let weights = params.weights();
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut comp = params.k() - 1;
            for (c, w) in weights.iter().enumerate() {
                acc += w.as_f64();
                if u < acc {
                    comp = c;
                    break;
                }
            }
            let eps: f64 = StandardNormal.sample(rng);
            let z_i = params.locations[comp] + params.scales[comp] * F::cast(eps);
            out.push(z_i);
            z_prev = Node::constant(Tensor::vector(vec![z_i]));
        }
        Ok(out)
    }

    /// Greedy mean propagation: each step emits its conditional mixture mean
    /// and the chain is advanced on the running means. Differentiable; exact
    /// for a single step, an approximation of the marginal mean beyond it.
    pub fn mean<F: Real>(&self, store: &ParamStore<F>, ctx: &CtxNodes<F>) -> Result<Node<F>> {
        let n = ctx.n_targets();
        if n == 0 {
            return Ok(Node::constant(Tensor::vector(Vec::new())));
        }
        let mut state = self.gru.zero_state();
        let mut z_prev = Node::constant(Tensor::vector(vec![-F::one()]));
        let mut means = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = self.step_raw(store, &z_prev, ctx, &mut state)?;
            let (mu, _sigma, logits) = split_raw_params(&raw, self.k)?;
            let mean_i = logits.softmax()?.mul(&mu)?.sum();
            means.push(mean_i.clone());
            z_prev = mean_i;
        }
        Node::concat(&means.iter().collect::<Vec<_>>())
    }
}
