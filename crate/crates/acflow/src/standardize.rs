//! Per-feature z-scoring. The flow always operates on standardized values;
//! log-likelihoods convert back to raw space through the Jacobian
//! correction `-sum(log std)` over the reported dimensions.

use crate::error::{Error, Result};
use crate::mask::BitMask;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer<F: Real = f64> {
    mean: Vec<F>,
    std: Vec<F>,
}

impl<F: Real> Standardizer<F> {
    pub fn new(mean: Vec<F>, std: Vec<F>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::Data(format!(
                "standardizer mean/std lengths disagree: {} vs {}",
                mean.len(),
                std.len()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) || std.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("standardizer statistics must be finite".into()));
        }
        if std.iter().any(|v| *v <= F::zero()) {
            return Err(Error::Data(
                "standardizer std must be positive for every feature (constant column?)".into(),
            ));
        }
        Ok(Standardizer { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Standardizer {
            mean: vec![F::zero(); d],
            std: vec![F::one(); d],
        }
    }

    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[F] {
        &self.mean
    }

    pub fn std(&self) -> &[F] {
        &self.std
    }

    /// Standardize values that sit at the 1-positions of `mask`.
    pub fn standardize_subset(&self, values: &[F], mask: &BitMask) -> Vec<F> {
        debug_assert_eq!(values.len(), mask.popcount());
        mask.ones_iter()
            .zip(values.iter())
            .map(|(f, &v)| (v - self.mean[f]) / self.std[f])
            .collect()
    }

    pub fn unstandardize_subset(&self, values: &[F], mask: &BitMask) -> Vec<F> {
        debug_assert_eq!(values.len(), mask.popcount());
        mask.ones_iter()
            .zip(values.iter())
            .map(|(f, &v)| v * self.std[f] + self.mean[f])
            .collect()
    }

    /// sum over the masked features of log std — the change-of-variables
    /// term between standardized and raw nats.
    pub fn log_std_sum(&self, mask: &BitMask) -> F {
        mask.ones_iter().map(|f| self.std[f].ln()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_round_trip() {
        let s = Standardizer::new(vec![1.0, -2.0, 0.5], vec![2.0, 0.5, 1.0]).unwrap();
        let mask: BitMask = "101".parse().unwrap();
        let raw = vec![3.0, 1.5];
        let std = s.standardize_subset(&raw, &mask);
        assert_eq!(std, vec![1.0, 1.0]);
        assert_eq!(s.unstandardize_subset(&std, &mask), raw);
        assert!((s.log_std_sum(&mask) - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_std_rejected() {
        assert!(Standardizer::new(vec![0.0], vec![0.0]).is_err());
    }
}
