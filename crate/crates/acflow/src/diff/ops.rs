//! Differentiable operations over [`Node`]s.
//!
//! Binary elementwise ops accept equal shapes, or a scalar on either side.
//! Every op validates its preconditions up front and returns a structured
//! error instead of producing NaNs on domain violations.

use crate::error::{Error, Result};
use crate::mask::BitMask;
use crate::scalar::Real;
use crate::tensor::{self, Lu, Tensor, COND_LIMIT, DET_ABS_FLOOR};

use super::graph::Node;

fn same_or_scalar<F: Real>(op: &'static str, a: &Node<F>, b: &Node<F>) -> Result<()> {
    if a.shape() == b.shape() || a.numel() == 1 || b.numel() == 1 {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            details: format!("{:?} vs {:?}", a.shape(), b.shape()),
        })
    }
}

fn broadcast_apply<F: Real>(a: &Tensor<F>, b: &Tensor<F>, f: impl Fn(F, F) -> F) -> Tensor<F> {
    if a.shape() == b.shape() {
        a.zip(b, "broadcast", f).expect("checked")
    } else if a.numel() == 1 {
        let av = a.data()[0];
        b.map(|bv| f(av, bv))
    } else {
        let bv = b.data()[0];
        a.map(|av| f(av, bv))
    }
}

/// Reduce `grad` down to `shape` when that operand was a broadcast scalar.
fn reduce_to<F: Real>(grad: Tensor<F>, shape: &[usize]) -> Tensor<F> {
    if grad.shape() == shape {
        grad
    } else {
        let mut t = Tensor::zeros(shape);
        t.data_mut()[0] = grad.sum();
        t
    }
}

impl<F: Real> Node<F> {
    pub fn add(&self, other: &Node<F>) -> Result<Node<F>> {
        same_or_scalar("add", self, other)?;
        let value = broadcast_apply(self.value(), other.value(), |a, b| a + b);
        Ok(Node::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents, _| {
                vec![
                    reduce_to(g.clone(), parents[0].shape()),
                    reduce_to(g.clone(), parents[1].shape()),
                ]
            }),
        ))
    }

    pub fn sub(&self, other: &Node<F>) -> Result<Node<F>> {
        same_or_scalar("sub", self, other)?;
        let value = broadcast_apply(self.value(), other.value(), |a, b| a - b);
        Ok(Node::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents, _| {
                vec![
                    reduce_to(g.clone(), parents[0].shape()),
                    reduce_to(g.map(|v| -v), parents[1].shape()),
                ]
            }),
        ))
    }

    pub fn mul(&self, other: &Node<F>) -> Result<Node<F>> {
        same_or_scalar("mul", self, other)?;
        let value = broadcast_apply(self.value(), other.value(), |a, b| a * b);
        Ok(Node::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents, _| {
                let a = parents[0].value();
                let b = parents[1].value();
                let ga = broadcast_apply(g, b, |gv, bv| gv * bv);
                let gb = broadcast_apply(g, a, |gv, av| gv * av);
                vec![reduce_to(ga, a.shape()), reduce_to(gb, b.shape())]
            }),
        ))
    }

    pub fn div(&self, other: &Node<F>) -> Result<Node<F>> {
        same_or_scalar("div", self, other)?;
        if other.value().data().iter().any(|v| *v == F::zero()) {
            return Err(Error::Domain {
                op: "div",
                details: "division by zero".into(),
            });
        }
        let value = broadcast_apply(self.value(), other.value(), |a, b| a / b);
        Ok(Node::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents, out| {
                let a = parents[0].value();
                let b = parents[1].value();
                let ga = broadcast_apply(g, b, |gv, bv| gv / bv);
                // d/db (a/b) = -a/b^2 = -out/b
                let goverb = broadcast_apply(g, b, |gv, bv| gv / bv);
                let gb = broadcast_apply(&goverb, out, |gv, ov| -gv * ov);
                vec![reduce_to(ga, a.shape()), reduce_to(gb, b.shape())]
            }),
        ))
    }

    pub fn neg(&self) -> Node<F> {
        Node::from_op(
            self.value().map(|v| -v),
            vec![self.clone()],
            Box::new(|g, _, _| vec![g.map(|v| -v)]),
        )
    }

    /// x + c for a plain constant.
    pub fn shift(&self, c: F) -> Node<F> {
        Node::from_op(
            self.value().map(|v| v + c),
            vec![self.clone()],
            Box::new(|g, _, _| vec![g.clone()]),
        )
    }

    /// x * c for a plain constant.
    pub fn scale(&self, c: F) -> Node<F> {
        Node::from_op(
            self.value().map(|v| v * c),
            vec![self.clone()],
            Box::new(move |g, _, _| vec![g.map(|v| v * c)]),
        )
    }

    pub fn exp(&self) -> Node<F> {
        Node::from_op(
            self.value().map(|v| v.exp()),
            vec![self.clone()],
            Box::new(|g, _, out| vec![g.zip(out, "exp_vjp", |gv, ov| gv * ov).expect("shape")]),
        )
    }

    pub fn ln(&self) -> Result<Node<F>> {
        if self.value().data().iter().any(|v| *v <= F::zero()) {
            return Err(Error::Domain {
                op: "log",
                details: "log of a non-positive value".into(),
            });
        }
        Ok(Node::from_op(
            self.value().map(|v| v.ln()),
            vec![self.clone()],
            Box::new(|g, parents, _| {
                vec![g
                    .zip(parents[0].value(), "log_vjp", |gv, xv| gv / xv)
                    .expect("shape")]
            }),
        ))
    }

    pub fn tanh(&self) -> Node<F> {
        Node::from_op(
            self.value().map(|v| v.tanh()),
            vec![self.clone()],
            Box::new(|g, _, out| {
                vec![g
                    .zip(out, "tanh_vjp", |gv, ov| gv * (F::one() - ov * ov))
                    .expect("shape")]
            }),
        )
    }

    pub fn sigmoid(&self) -> Node<F> {
        Node::from_op(
            self.value().map(sigmoid_scalar),
            vec![self.clone()],
            Box::new(|g, _, out| {
                vec![g
                    .zip(out, "sigmoid_vjp", |gv, ov| gv * ov * (F::one() - ov))
                    .expect("shape")]
            }),
        )
    }

    pub fn leaky_relu(&self, alpha: F) -> Node<F> {
        Node::from_op(
            self.value().map(|v| if v >= F::zero() { v } else { alpha * v }),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                vec![g
                    .zip(parents[0].value(), "leaky_vjp", |gv, xv| {
                        if xv >= F::zero() {
                            gv
                        } else {
                            gv * alpha
                        }
                    })
                    .expect("shape")]
            }),
        )
    }

    pub fn softplus(&self) -> Node<F> {
        Node::from_op(
            self.value().map(softplus_scalar),
            vec![self.clone()],
            Box::new(|g, parents, _| {
                vec![g
                    .zip(parents[0].value(), "softplus_vjp", |gv, xv| {
                        gv * sigmoid_scalar(xv)
                    })
                    .expect("shape")]
            }),
        )
    }

    pub fn square(&self) -> Node<F> {
        Node::from_op(
            self.value().map(|v| v * v),
            vec![self.clone()],
            Box::new(|g, parents, _| {
                let two = F::cast(2.0);
                vec![g
                    .zip(parents[0].value(), "square_vjp", |gv, xv| gv * two * xv)
                    .expect("shape")]
            }),
        )
    }

    pub fn sum(&self) -> Node<F> {
        Node::from_op(
            Tensor::scalar(self.value().sum()),
            vec![self.clone()],
            Box::new(|g, parents, _| {
                let gv = g.data()[0];
                vec![Tensor::full(parents[0].shape(), gv)]
            }),
        )
    }

    pub fn mean(&self) -> Result<Node<F>> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::Domain {
                op: "mean",
                details: "mean of an empty tensor".into(),
            });
        }
        let inv = F::one() / F::cast(n as f64);
        Ok(Node::from_op(
            Tensor::scalar(self.value().sum() * inv),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let gv = g.data()[0] * inv;
                vec![Tensor::full(parents[0].shape(), gv)]
            }),
        ))
    }

    /// Softmax over a rank-1 tensor.
    pub fn softmax(&self) -> Result<Node<F>> {
        if self.value().rank() != 1 || self.numel() == 0 {
            return Err(Error::Shape {
                op: "softmax",
                details: format!("expected non-empty vector, got {:?}", self.shape()),
            });
        }
        let value = softmax_tensor(self.value());
        Ok(Node::from_op(
            value,
            vec![self.clone()],
            Box::new(|g, _, out| {
                let dot: F = g
                    .data()
                    .iter()
                    .zip(out.data().iter())
                    .map(|(&gv, &sv)| gv * sv)
                    .sum();
                vec![out
                    .zip(g, "softmax_vjp", |sv, gv| sv * (gv - dot))
                    .expect("shape")]
            }),
        ))
    }

    /// log(sum(exp(x))) over a rank-1 tensor, reduced to a scalar.
    pub fn logsumexp(&self) -> Result<Node<F>> {
        if self.value().rank() != 1 || self.numel() == 0 {
            return Err(Error::Shape {
                op: "logsumexp",
                details: format!("expected non-empty vector, got {:?}", self.shape()),
            });
        }
        let value = logsumexp_slice(self.value().data());
        Ok(Node::from_op(
            Tensor::scalar(value),
            vec![self.clone()],
            Box::new(move |g, parents, out| {
                let gv = g.data()[0];
                let lse = out.data()[0];
                vec![parents[0].value().map(|xv| gv * (xv - lse).exp())]
            }),
        ))
    }

    /// Matrix product: [m,k]x[k,n] -> [m,n] or [m,k]x[k] -> [m].
    pub fn matmul(&self, other: &Node<F>) -> Result<Node<F>> {
        let value = tensor::matmul(self.value(), other.value())?;
        Ok(Node::from_op(
            value,
            vec![self.clone(), other.clone()],
            Box::new(|g, parents, _| {
                let a = parents[0].value();
                let b = parents[1].value();
                // dA = g b^T (or outer(g, b) for matvec); dB = a^T g
                let ga = if b.rank() == 1 {
                    tensor::matmul_nt(&Tensor::vector(g.data().to_vec()), b).expect("outer")
                } else {
                    tensor::matmul_nt(g, b).expect("gbT")
                };
                let gb = tensor::matmul_tn(a, g).expect("aTg");
                vec![ga, gb]
            }),
        ))
    }

    /// Concatenate rank-1 (or scalar) nodes into one vector.
    pub fn concat(parts: &[&Node<F>]) -> Result<Node<F>> {
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            if p.value().rank() > 1 {
                return Err(Error::Shape {
                    op: "concat",
                    details: format!("only vectors/scalars, got {:?}", p.shape()),
                });
            }
            lens.push(p.numel());
            data.extend_from_slice(p.value().data());
        }
        let parents: Vec<Node<F>> = parts.iter().map(|p| (*p).clone()).collect();
        Ok(Node::from_op(
            Tensor::vector(data),
            parents,
            Box::new(move |g, parents, _| {
                let mut grads = Vec::with_capacity(lens.len());
                let mut off = 0;
                for (len, parent) in lens.iter().zip(parents.iter()) {
                    let chunk = g.data()[off..off + len].to_vec();
                    off += len;
                    let mut t = Tensor::zeros(parent.shape());
                    t.data_mut().copy_from_slice(&chunk);
                    grads.push(t);
                }
                grads
            }),
        ))
    }

    /// Single element of a vector, as a scalar node.
    pub fn get(&self, index: usize) -> Result<Node<F>> {
        if self.value().rank() != 1 || index >= self.numel() {
            return Err(Error::Shape {
                op: "get",
                details: format!("index {index} into shape {:?}", self.shape()),
            });
        }
        Ok(Node::from_op(
            Tensor::scalar(self.value().data()[index]),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let mut t = Tensor::zeros(parents[0].shape());
                t.data_mut()[index] = g.data()[0];
                vec![t]
            }),
        ))
    }

    /// Contiguous sub-vector `[lo, hi)`.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<Node<F>> {
        if self.value().rank() != 1 || hi < lo || hi > self.numel() {
            return Err(Error::Shape {
                op: "slice",
                details: format!("[{lo}, {hi}) of shape {:?}", self.shape()),
            });
        }
        Ok(Node::from_op(
            Tensor::vector(self.value().data()[lo..hi].to_vec()),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let mut t = Tensor::zeros(parents[0].shape());
                t.data_mut()[lo..hi].copy_from_slice(g.data());
                vec![t]
            }),
        ))
    }

    /// Keep entries of a vector where the mask is 1, preserving order.
    pub fn index_mask(&self, mask: &BitMask) -> Result<Node<F>> {
        if self.value().rank() != 1 || self.numel() != mask.len() {
            return Err(Error::Shape {
                op: "slice_by_mask",
                details: format!("shape {:?} vs mask length {}", self.shape(), mask.len()),
            });
        }
        let positions: Vec<usize> = mask.ones_iter().collect();
        let data: Vec<F> = positions.iter().map(|&i| self.value().data()[i]).collect();
        Ok(Node::from_op(
            Tensor::vector(data),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let mut t = Tensor::zeros(parents[0].shape());
                for (k, &i) in positions.iter().enumerate() {
                    t.data_mut()[i] = g.data()[k];
                }
                vec![t]
            }),
        ))
    }

    /// Scatter a vector of length `popcount(mask)` into a zero vector of
    /// length `mask.len()` — the differentiable zero-imputing embed.
    pub fn embed_mask(&self, mask: &BitMask) -> Result<Node<F>> {
        if self.value().rank() != 1 || self.numel() != mask.popcount() {
            return Err(Error::Shape {
                op: "embed_mask",
                details: format!(
                    "shape {:?} vs mask popcount {}",
                    self.shape(),
                    mask.popcount()
                ),
            });
        }
        let positions: Vec<usize> = mask.ones_iter().collect();
        let mut data = vec![F::zero(); mask.len()];
        for (k, &i) in positions.iter().enumerate() {
            data[i] = self.value().data()[k];
        }
        Ok(Node::from_op(
            Tensor::vector(data),
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let mut t = Tensor::zeros(parents[0].shape());
                for (k, &i) in positions.iter().enumerate() {
                    t.data_mut()[k] = g.data()[i];
                }
                vec![t]
            }),
        ))
    }

    /// Sub-matrix keeping rows then columns where the masks are 1.
    pub fn index_mask2(&self, rows: &BitMask, cols: &BitMask) -> Result<Node<F>> {
        if self.value().rank() != 2
            || self.shape()[0] != rows.len()
            || self.shape()[1] != cols.len()
        {
            return Err(Error::Shape {
                op: "index_mask2",
                details: format!(
                    "shape {:?} vs masks {}x{}",
                    self.shape(),
                    rows.len(),
                    cols.len()
                ),
            });
        }
        let rpos: Vec<usize> = rows.ones_iter().collect();
        let cpos: Vec<usize> = cols.ones_iter().collect();
        let ncols = self.shape()[1];
        let mut data = Vec::with_capacity(rpos.len() * cpos.len());
        for &r in &rpos {
            for &c in &cpos {
                data.push(self.value().data()[r * ncols + c]);
            }
        }
        let out = Tensor::from_vec(vec![rpos.len(), cpos.len()], data)?;
        Ok(Node::from_op(
            out,
            vec![self.clone()],
            Box::new(move |g, parents, _| {
                let mut t = Tensor::zeros(parents[0].shape());
                let stride = parents[0].shape()[1];
                let gw = cpos.len();
                for (gi, &r) in rpos.iter().enumerate() {
                    for (gj, &c) in cpos.iter().enumerate() {
                        t.data_mut()[r * stride + c] = g.data()[gi * gw + gj];
                    }
                }
                vec![t]
            }),
        ))
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Node<F>> {
        let value = Tensor::from_vec(shape, self.value().data().to_vec())?;
        Ok(Node::from_op(
            value,
            vec![self.clone()],
            Box::new(|g, parents, _| {
                vec![Tensor::from_vec(parents[0].shape().to_vec(), g.data().to_vec())
                    .expect("reshape_vjp")]
            }),
        ))
    }

    /// Reverse the order of a vector's entries.
    pub fn reverse(&self) -> Result<Node<F>> {
        if self.value().rank() != 1 {
            return Err(Error::Shape {
                op: "reverse",
                details: format!("expected vector, got {:?}", self.shape()),
            });
        }
        let mut data = self.value().data().to_vec();
        data.reverse();
        Ok(Node::from_op(
            Tensor::vector(data),
            vec![self.clone()],
            Box::new(|g, _, _| {
                let mut data = g.data().to_vec();
                data.reverse();
                vec![Tensor::vector(data)]
            }),
        ))
    }

    /// Solve `A x = b` for square `A`, differentiable in both arguments.
    /// Fails on singular or badly conditioned `A` per the transform error
    /// contract.
    pub fn solve(a: &Node<F>, b: &Node<F>) -> Result<Node<F>> {
        let (inv, _logabsdet) = checked_inverse(a.value())?;
        if b.value().rank() != 1 || b.numel() != a.shape()[0] {
            return Err(Error::Shape {
                op: "solve",
                details: format!("A {:?} vs b {:?}", a.shape(), b.shape()),
            });
        }
        let x = tensor::matmul(&inv, b.value())?;
        Ok(Node::from_op(
            x,
            vec![a.clone(), b.clone()],
            Box::new(move |g, _, out| {
                // gb = A^-T g ; gA = -gb x^T
                let gb = tensor::matmul_tn(&inv, g).expect("solve_vjp_b");
                let ga = tensor::matmul_nt(&gb, &Tensor::vector(out.data().to_vec()))
                    .expect("solve_vjp_a")
                    .map(|v| -v);
                vec![ga, gb]
            }),
        ))
    }

    /// log |det A| for square `A`, with the same conditioning checks.
    pub fn logabsdet(a: &Node<F>) -> Result<Node<F>> {
        let (inv, logabsdet) = checked_inverse(a.value())?;
        Ok(Node::from_op(
            Tensor::scalar(logabsdet),
            vec![a.clone()],
            Box::new(move |g, _, _| {
                let gv = g.data()[0];
                // d log|det A| / dA = A^-T
                let n = inv.shape()[0];
                let mut t = Tensor::zeros(&[n, n]);
                for i in 0..n {
                    for j in 0..n {
                        t.data_mut()[i * n + j] = gv * inv.at2(j, i);
                    }
                }
                vec![t]
            }),
        ))
    }
}

/// Factor, invert and sanity-check a square matrix. Returns its inverse and
/// log |det|, or a numerical error when |det| or the 1-norm condition number
/// are out of range.
fn checked_inverse<F: Real>(a: &Tensor<F>) -> Result<(Tensor<F>, F)> {
    let lu = Lu::factor(a)?;
    let logabsdet = lu.log_abs_det();
    if logabsdet.as_f64() < DET_ABS_FLOOR.ln() {
        return Err(Error::Numerical {
            transform: None,
            details: format!(
                "matrix is numerically singular: log|det| = {:.3}",
                logabsdet.as_f64()
            ),
        });
    }
    let inv = lu.inverse()?;
    let cond = tensor::one_norm(a).as_f64() * tensor::one_norm(&inv).as_f64();
    if !cond.is_finite() || cond > COND_LIMIT {
        return Err(Error::Numerical {
            transform: None,
            details: format!("matrix condition estimate {cond:.3e} exceeds limit"),
        });
    }
    Ok((inv, logabsdet))
}

pub fn sigmoid_scalar<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

pub fn softplus_scalar<F: Real>(x: F) -> F {
    // max(x, 0) + ln(1 + exp(-|x|))
    let m = if x > F::zero() { x } else { F::zero() };
    m + (-x.abs()).exp().ln_1p()
}

pub fn logsumexp_slice<F: Real>(xs: &[F]) -> F {
    let m = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if !m.is_finite() {
        return m;
    }
    let s: F = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

pub fn softmax_tensor<F: Real>(x: &Tensor<F>) -> Tensor<F> {
    let lse = logsumexp_slice(x.data());
    x.map(|v| (v - lse).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::graph::{backward, ParamStore};

    fn scalar_node(v: f64) -> (ParamStore, crate::diff::graph::ParamId, Node) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(v), true).unwrap();
        let node = store.leaf(id);
        (store, id, node)
    }

    #[test]
    fn matmul_identity_case() {
        let i2: Node = Node::constant(Tensor::eye(2));
        let v = Node::vector_const(vec![3.0, 4.0]);
        let out = i2.matmul(&v).unwrap();
        assert_eq!(out.value().data(), &[3.0, 4.0]);
    }

    #[test]
    fn logsumexp_of_zeros_is_ln2() {
        let x: Node = Node::vector_const(vec![0.0, 0.0]);
        let out = x.logsumexp().unwrap();
        assert!((out.scalar_value().unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn leaky_relu_definition() {
        let x: Node = Node::vector_const(vec![-2.0]);
        let y = x.leaky_relu(0.1);
        assert!((y.value().data()[0] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn backward_square() {
        let (_store, id, x) = scalar_node(3.0);
        let y = x.square();
        let grads = backward(&y).unwrap();
        assert!((grads.param_grad(id).unwrap().data()[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn backward_logsumexp_is_softmax() {
        let mut store: ParamStore = ParamStore::new();
        let id = store.add("x", Tensor::vector(vec![0.0, 0.0]), true).unwrap();
        let x = store.leaf(id);
        let y = x.logsumexp().unwrap();
        let grads = backward(&y).unwrap();
        let g = grads.param_grad(id).unwrap().data();
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((g[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn backward_rejects_non_scalar_root() {
        let x: Node = Node::vector_const(vec![1.0, 2.0]);
        let y = x.scale(2.0);
        assert!(backward(&y).is_err());
    }

    #[test]
    fn shape_mismatch_is_structured() {
        let a: Node = Node::vector_const(vec![1.0, 2.0]);
        let b: Node = Node::vector_const(vec![1.0, 2.0, 3.0]);
        match a.add(&b) {
            Err(Error::Shape { op, .. }) => assert_eq!(op, "add"),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn log_domain_violation_is_structured() {
        let a: Node = Node::vector_const(vec![1.0, -2.0]);
        match a.ln() {
            Err(Error::Domain { op, .. }) => assert_eq!(op, "log"),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let x: Node = Node::vector_const(vec![0.3, -1.2, 2.5]);
        let a = x.tanh().exp().sum().scalar_value().unwrap();
        let b = x.tanh().exp().sum().scalar_value().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_is_linear_in_the_root() {
        // grad of (a*f + b*g) == a*grad f + b*grad g
        let mut store: ParamStore = ParamStore::new();
        let id = store
            .add("x", Tensor::vector(vec![0.7, -0.4, 1.1]), true)
            .unwrap();
        let (a, b) = (2.5, -1.25);

        let x = store.leaf(id);
        let f = x.tanh().sum();
        let g = x.square().sum();
        let combined = f.scale(a).add(&g.scale(b)).unwrap();
        let gc = backward(&combined).unwrap();

        let gf = backward(&store.leaf(id).tanh().sum()).unwrap();
        let gg = backward(&store.leaf(id).square().sum()).unwrap();

        let gc = gc.param_grad(id).unwrap().data();
        let gf = gf.param_grad(id).unwrap().data();
        let gg = gg.param_grad(id).unwrap().data();
        for i in 0..3 {
            assert!((gc[i] - (a * gf[i] + b * gg[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_and_logabsdet_roundtrip() {
        let a: Node = Node::constant(Tensor::matrix(2, 2, vec![2.0, 1.0, 0.0, 3.0]).unwrap());
        let b = Node::vector_const(vec![5.0, 9.0]);
        let x = Node::solve(&a, &b).unwrap();
        // 2x + y = 5, 3y = 9 -> y = 3, x = 1
        assert!((x.value().data()[0] - 1.0).abs() < 1e-12);
        assert!((x.value().data()[1] - 3.0).abs() < 1e-12);
        let ld = Node::logabsdet(&a).unwrap();
        assert!((ld.scalar_value().unwrap() - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_is_numerical_error() {
        let a: Node = Node::constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap());
        let b = Node::vector_const(vec![1.0, 1.0]);
        match Node::solve(&a, &b) {
            Err(Error::Numerical { .. }) => {}
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
