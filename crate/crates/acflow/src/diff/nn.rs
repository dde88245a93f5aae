//! Small trainable building blocks: dense layers, MLPs, and GRU cells.
//! These hold parameter ids only; all state lives in the [`ParamStore`].

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

use super::graph::{Node, ParamId, ParamStore};

/// How to initialize the output layer of an MLP.
#[derive(Clone, Copy, Debug)]
pub enum FinalInit {
    /// Exact zeros; coupling nets start as the identity transform.
    Zeros,
    /// Gaussian with the given standard deviation.
    Randn(f64),
}

/// y = W x + b.
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
}

impl Dense {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        weight_std: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = gaussian_tensor(&[out_dim, in_dim], weight_std, rng);
        // Non-zero bias keeps ReLU pre-activations off the kink even for
        // all-zero conditioning inputs (the b = 0 joint context).
        let b = uniform_tensor(&[out_dim], 1.0 / (in_dim.max(1) as f64).sqrt(), rng);
        Ok(Dense {
            w: store.add(format!("{name}.w"), w, true)?,
            b: store.add(format!("{name}.b"), b, true)?,
        })
    }

    pub fn forward<F: Real>(&self, store: &ParamStore<F>, x: &Node<F>) -> Result<Node<F>> {
        store.leaf(self.w).matmul(x)?.add(&store.leaf(self.b))
    }
}

/// Fully connected network with `n_hidden` ReLU hidden layers of equal width.
/// `n_hidden = 0` reduces to a single affine map.
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        n_hidden: usize,
        out_dim: usize,
        final_init: FinalInit,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(n_hidden + 1);
        let mut cur = in_dim;
        for l in 0..n_hidden {
            let std = (2.0 / cur.max(1) as f64).sqrt();
            layers.push(Dense::init(store, &format!("{name}.l{l}"), cur, hidden, std, rng)?);
            cur = hidden;
        }
        let final_name = format!("{name}.l{n_hidden}");
        let layer = match final_init {
            FinalInit::Zeros => {
                let w = Tensor::zeros(&[out_dim, cur]);
                let b = Tensor::zeros(&[out_dim]);
                Dense {
                    w: store.add(format!("{final_name}.w"), w, true)?,
                    b: store.add(format!("{final_name}.b"), b, true)?,
                }
            }
            FinalInit::Randn(std) => Dense::init(store, &final_name, cur, out_dim, std, rng)?,
        };
        layers.push(layer);
        Ok(Mlp { layers })
    }

    pub fn forward<F: Real>(&self, store: &ParamStore<F>, x: &Node<F>) -> Result<Node<F>> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(store, &h)?;
            if i != last {
                h = h.leaky_relu(F::zero()); // plain ReLU
            }
        }
        Ok(h)
    }

    /// Bias parameter of the output layer (used by tests to pin outputs).
    pub fn output_bias(&self) -> ParamId {
        self.layers[self.layers.len() - 1].b
    }

    pub fn output_weight(&self) -> ParamId {
        self.layers[self.layers.len() - 1].w
    }
}

/// One GRU cell. Gate layout inside the stacked tensors is `[reset, update,
/// candidate]`, giving
///   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
pub struct GruCell {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub hidden: usize,
}

impl GruCell {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let k = 1.0 / (hidden as f64).sqrt();
        Ok(GruCell {
            w_ih: store.add(format!("{name}.w_ih"), uniform_tensor(&[3 * hidden, in_dim], k, rng), true)?,
            w_hh: store.add(format!("{name}.w_hh"), uniform_tensor(&[3 * hidden, hidden], k, rng), true)?,
            b_ih: store.add(format!("{name}.b_ih"), uniform_tensor(&[3 * hidden], k, rng), true)?,
            b_hh: store.add(format!("{name}.b_hh"), uniform_tensor(&[3 * hidden], k, rng), true)?,
            hidden,
        })
    }

    /// Standard GRU update; differentiable through all gates.
    pub fn step<F: Real>(
        &self,
        store: &ParamStore<F>,
        x: &Node<F>,
        h_prev: &Node<F>,
    ) -> Result<Node<F>> {
        let h = self.hidden;
        let gi = store.leaf(self.w_ih).matmul(x)?.add(&store.leaf(self.b_ih))?;
        let gh = store.leaf(self.w_hh).matmul(h_prev)?.add(&store.leaf(self.b_hh))?;

        let r = gi.slice(0, h)?.add(&gh.slice(0, h)?)?.sigmoid();
        let z = gi.slice(h, 2 * h)?.add(&gh.slice(h, 2 * h)?)?.sigmoid();
        let n = gi
            .slice(2 * h, 3 * h)?
            .add(&r.mul(&gh.slice(2 * h, 3 * h)?)?)?
            .tanh();

        // h' = n + z * (h_prev - n)
        n.add(&z.mul(&h_prev.sub(&n)?)?)
    }
}

/// Stacked GRU layers; the step output is the top layer's hidden state.
pub struct GruStack {
    pub cells: Vec<GruCell>,
}

impl GruStack {
    pub fn init<F: Real>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        hidden: usize,
        n_layers: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut cells = Vec::with_capacity(n_layers);
        let mut cur = in_dim;
        for l in 0..n_layers {
            cells.push(GruCell::init(store, &format!("{name}.gru{l}"), cur, hidden, rng)?);
            cur = hidden;
        }
        Ok(GruStack { cells })
    }

    pub fn hidden(&self) -> usize {
        self.cells[0].hidden
    }

    pub fn n_layers(&self) -> usize {
        self.cells.len()
    }

    /// Fresh all-zero hidden state, one node per layer.
    pub fn zero_state<F: Real>(&self) -> Vec<Node<F>> {
        self.cells
            .iter()
            .map(|c| Node::constant(Tensor::zeros(&[c.hidden])))
            .collect()
    }

    /// Advance one step; `state` is replaced with the new per-layer hidden
    /// states and the top state is returned.
    pub fn step<F: Real>(
        &self,
        store: &ParamStore<F>,
        x: &Node<F>,
        state: &mut Vec<Node<F>>,
    ) -> Result<Node<F>> {
        let mut input = x.clone();
        for (cell, h) in self.cells.iter().zip(state.iter_mut()) {
            let new_h = cell.step(store, &input, h)?;
            *h = new_h.clone();
            input = new_h;
        }
        Ok(input)
    }
}

pub fn gaussian_tensor<F: Real>(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor<F> {
    let normal = Normal::new(0.0, std.max(0.0)).unwrap_or_else(|_| Normal::new(0.0, 1.0).unwrap());
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            if std == 0.0 {
                F::zero()
            } else {
                F::cast(normal.sample(rng))
            }
        })
        .collect();
    Tensor::from_vec(shape.to_vec(), data).expect("gaussian_tensor")
}

pub fn uniform_tensor<F: Real>(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor<F> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("uniform bounds");
    let numel: usize = shape.iter().product();
    let data = (0..numel).map(|_| F::cast(dist.sample(rng))).collect();
    Tensor::from_vec(shape.to_vec(), data).expect("uniform_tensor")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::graph::backward;
    use crate::testutil::{fd_wrt_param, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gru_all_zero_weights_keeps_zero_state() {
        let mut store: ParamStore = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCell::init(&mut store, "g", 2, 3, &mut rng).unwrap();
        // overwrite with exact zeros
        for id in [cell.w_ih, cell.w_hh, cell.b_ih, cell.b_hh] {
            let shape = store.value(id).shape().to_vec();
            store.set_value(id, Tensor::zeros(&shape)).unwrap();
        }
        let x = Node::vector_const(vec![0.7, -1.3]);
        let h0 = Node::constant(Tensor::zeros(&[3]));
        let h1 = cell.step(&store, &x, &h0).unwrap();
        for v in h1.value().data() {
            assert_eq!(*v, 0.0, "candidate tanh(0)=0 keeps the state at zero");
        }
    }

    #[test]
    fn gru_single_unit_matches_scalar_gate_arithmetic() {
        // Hand-set weights on a 1-unit, 1-input GRU and recompute the gate
        // equations with plain scalar math.
        let mut store: ParamStore = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = GruCell::init(&mut store, "g", 1, 1, &mut rng).unwrap();
        let (wir, wiz, win) = (0.5, -0.3, 0.8);
        let (whr, whz, whn) = (0.2, 0.7, -0.6);
        let (bir, biz, bin) = (0.1, -0.2, 0.05);
        let (bhr, bhz, bhn) = (-0.15, 0.25, 0.3);
        store
            .set_value(cell.w_ih, Tensor::matrix(3, 1, vec![wir, wiz, win]).unwrap())
            .unwrap();
        store
            .set_value(cell.w_hh, Tensor::matrix(3, 1, vec![whr, whz, whn]).unwrap())
            .unwrap();
        store
            .set_value(cell.b_ih, Tensor::vector(vec![bir, biz, bin]))
            .unwrap();
        store
            .set_value(cell.b_hh, Tensor::vector(vec![bhr, bhz, bhn]))
            .unwrap();

        let (x, h) = (0.9, -0.4);
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let r = sigmoid(wir * x + bir + whr * h + bhr);
        let z = sigmoid(wiz * x + biz + whz * h + bhz);
        let n = (win * x + bin + r * (whn * h + bhn)).tanh();
        let expected = (1.0 - z) * n + z * h;

        let out = cell
            .step(&store, &Node::vector_const(vec![x]), &Node::vector_const(vec![h]))
            .unwrap();
        assert!((out.value().data()[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn gru_three_step_unroll_gradients_match_finite_differences() {
        let mut store: ParamStore = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stack = GruStack::init(&mut store, "g", 2, 4, 2, &mut rng).unwrap();
        let inputs = [vec![0.5, -0.2], vec![-1.0, 0.3], vec![0.1, 0.8]];

        let eval = |store: &ParamStore| -> f64 {
            let mut state = stack.zero_state();
            let mut last = Node::constant(Tensor::zeros(&[4]));
            for x in &inputs {
                last = stack
                    .step(store, &Node::vector_const(x.clone()), &mut state)
                    .unwrap();
            }
            last.sum().scalar_value().unwrap()
        };

        // analytic gradients
        let mut state = stack.zero_state();
        let mut last = Node::constant(Tensor::zeros(&[4]));
        for x in &inputs {
            last = stack
                .step(&store, &Node::vector_const(x.clone()), &mut state)
                .unwrap();
        }
        let grads = backward(&last.sum()).unwrap();

        let ids: Vec<_> = store.ids().collect();
        let mut checked = 0;
        for id in ids {
            let numel = store.value(id).numel();
            for index in (0..numel).step_by(7) {
                let analytic = grads
                    .param_grad(id)
                    .map(|t| t.data()[index])
                    .unwrap_or(0.0);
                let fd = fd_wrt_param(&mut store, id, index, 1e-5, &eval);
                assert!(
                    rel_err(analytic, fd, 1e-7) < 1e-4,
                    "param {id:?}[{index}]: analytic {analytic} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }

    #[test]
    fn four_layer_mlp_gradients_match_finite_differences() {
        let mut store: ParamStore = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = Mlp::init(&mut store, "m", 3, 6, 3, 1, FinalInit::Randn(0.5), &mut rng).unwrap();
        let x = vec![0.4, -1.1, 0.9];

        let eval = |store: &ParamStore| -> f64 {
            mlp.forward(store, &Node::vector_const(x.clone()))
                .unwrap()
                .sum()
                .scalar_value()
                .unwrap()
        };

        let out = mlp.forward(&store, &Node::vector_const(x.clone())).unwrap().sum();
        let grads = backward(&out).unwrap();

        let mut checked = 0;
        for id in store.ids().collect::<Vec<_>>() {
            let numel = store.value(id).numel();
            for index in (0..numel).step_by(5) {
                let analytic = grads
                    .param_grad(id)
                    .map(|t| t.data()[index])
                    .unwrap_or(0.0);
                let fd = fd_wrt_param(&mut store, id, index, 1e-5, &eval);
                assert!(
                    rel_err(analytic, fd, 1e-7) < 1e-4,
                    "param {id:?}[{index}]: analytic {analytic} vs fd {fd}"
                );
                checked += 1;
            }
        }
        assert!(checked > 20);
    }
}
