//! Gaussian-mixture densities for one latent dimension, in value space and
//! as graph nodes.

use crate::diff::{logsumexp_slice, Node};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mixture parameters for a single dimension: K locations, K positive
/// scales, K mixing logits. Network heads produce scales via
/// `softplus(raw) + 1e-6`, keeping them bounded away from zero.
#[derive(Clone, Debug)]
pub struct GmmParams<F: Real = f64> {
    pub locations: Vec<F>,
    pub scales: Vec<F>,
    pub logits: Vec<F>,
}

impl<F: Real> GmmParams<F> {
    pub fn new(locations: Vec<F>, scales: Vec<F>, logits: Vec<F>) -> Result<Self> {
        if locations.len() != scales.len() || scales.len() != logits.len() || locations.is_empty()
        {
            return Err(Error::Shape {
                op: "gmm_params",
                details: format!(
                    "component counts disagree: {} / {} / {}",
                    locations.len(),
                    scales.len(),
                    logits.len()
                ),
            });
        }
        Ok(GmmParams { locations, scales, logits })
    }

    pub fn k(&self) -> usize {
        self.locations.len()
    }

    /// Normalized mixing weights.
    pub fn weights(&self) -> Vec<F> {
        let lse = logsumexp_slice(&self.logits);
        self.logits.iter().map(|&l| (l - lse).exp()).collect()
    }

    /// Mixture mean, sum_k w_k mu_k.
    pub fn mean(&self) -> F {
        self.weights()
            .iter()
            .zip(self.locations.iter())
            .map(|(&w, &m)| w * m)
            .sum()
    }
}

/// log p(z) under a 1-dimensional Gaussian mixture:
/// `logsumexp_k [log w_k + log N(z; mu_k, sigma_k)]`.
pub fn gmm_log_prob<F: Real>(z: F, params: &GmmParams<F>) -> Result<F> {
    if params.scales.iter().any(|s| *s <= F::zero()) {
        return Err(Error::Domain {
            op: "gmm_log_prob",
            details: "mixture scales must be positive".into(),
        });
    }
    let lse_logits = logsumexp_slice(&params.logits);
    let half = F::cast(0.5);
    let terms: Vec<F> = params
        .locations
        .iter()
        .zip(params.scales.iter())
        .zip(params.logits.iter())
        .map(|((&mu, &sigma), &logit)| {
            let zn = (z - mu) / sigma;
            (logit - lse_logits) - half * F::ln_two_pi() - sigma.ln() - half * zn * zn
        })
        .collect();
    Ok(logsumexp_slice(&terms))
}

/// Graph-node version over raw network outputs laid out `[mu; raw_sigma;
/// logits]`, each of length `k`. Scales are `softplus(raw) + 1e-6`.
pub fn gmm_log_prob_node<F: Real>(z: &Node<F>, raw: &Node<F>, k: usize) -> Result<Node<F>> {
    let (mu, sigma, logits) = split_raw_params(raw, k)?;
    let log_w = logits.sub(&logits.logsumexp()?)?;
    let zn = z.sub(&mu)?.div(&sigma)?;
    let half_ln_two_pi = F::ln_two_pi() * F::cast(0.5);
    let comp = zn
        .square()
        .scale(F::cast(-0.5))
        .sub(&sigma.ln()?)?
        .shift(-half_ln_two_pi);
    log_w.add(&comp)?.logsumexp()
}

/// Split a `[3k]` raw head output into (mu, sigma, logits) nodes with the
/// positivity map applied to the scales.
pub fn split_raw_params<F: Real>(raw: &Node<F>, k: usize) -> Result<(Node<F>, Node<F>, Node<F>)> {
    if raw.numel() != 3 * k {
        return Err(Error::Shape {
            op: "gmm_raw_params",
            details: format!("expected 3k = {} raw values, got {}", 3 * k, raw.numel()),
        });
    }
    let mu = raw.slice(0, k)?;
    let sigma = raw.slice(k, 2 * k)?.softplus().shift(F::cast(SIGMA_FLOOR));
    let logits = raw.slice(2 * k, 3 * k)?;
    Ok((mu, sigma, logits))
}

/// Value-space mirror of [`split_raw_params`] for sampling paths.
pub fn params_from_raw<F: Real>(raw: &[F], k: usize) -> Result<GmmParams<F>> {
    if raw.len() != 3 * k {
        return Err(Error::Shape {
            op: "gmm_raw_params",
            details: format!("expected 3k = {} raw values, got {}", 3 * k, raw.len()),
        });
    }
    GmmParams::new(
        raw[0..k].to_vec(),
        raw[k..2 * k]
            .iter()
            .map(|&r| crate::diff::softplus_scalar(r) + F::cast(SIGMA_FLOOR))
            .collect(),
        raw[2 * k..3 * k].to_vec(),
    )
}

pub const SIGMA_FLOOR: f64 = 1e-6;

/// Raw sigma value whose softplus is 1, used to initialize heads at unit
/// scale: ln(e - 1).
pub const RAW_SIGMA_UNIT: f64 = 0.5413248546129181;
