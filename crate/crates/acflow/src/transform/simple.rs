//! Element-wise leaky-ReLU and order-reversing transforms. Neither uses the
//! conditioning context.

use crate::diff::Node;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub struct LeakyRelu {
    alpha: f64,
}

impl LeakyRelu {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::Config(format!(
                "leaky_relu slope must be positive and finite, got {alpha}"
            )));
        }
        Ok(LeakyRelu { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn forward<F: Real>(&self, x_u: &Node<F>) -> Result<(Node<F>, Node<F>)> {
        let alpha = F::cast(self.alpha);
        let y = x_u.leaky_relu(alpha);
        // log-det = (#negative entries) * ln(alpha); piecewise constant in x.
        let negatives = x_u.value().data().iter().filter(|v| **v < F::zero()).count();
        let logdet = Node::scalar_const(F::cast(negatives as f64 * self.alpha.ln()));
        Ok((y, logdet))
    }

    pub fn inverse<F: Real>(&self, z_u: &Node<F>) -> Result<Node<F>> {
        // Negative outputs came from negative inputs (alpha > 0), so the
        // inverse is leaky-ReLU with the reciprocal slope.
        Ok(z_u.leaky_relu(F::one() / F::cast(self.alpha)))
    }
}

pub struct Reverse;

impl Reverse {
    pub fn forward<F: Real>(&self, x_u: &Node<F>) -> Result<(Node<F>, Node<F>)> {
        Ok((x_u.reverse()?, Node::scalar_const(F::zero())))
    }

    pub fn inverse<F: Real>(&self, z_u: &Node<F>) -> Result<Node<F>> {
        z_u.reverse()
    }
}
