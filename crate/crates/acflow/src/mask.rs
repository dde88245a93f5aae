//! Bitmask semantics: indexing, the zero-imputing embed, mask generators,
//! and missing-data composition.
//!
//! Three masks appear throughout the crate, all of length `d`:
//! - `b` marks observed dimensions,
//! - `m` marks non-missing dimensions (`b <= m` elementwise),
//! - the target mask `m & !b` marks the dimensions being modeled.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Length-d binary vector, one byte per bit. d stays small enough (<= 1e4)
/// that packing would buy nothing.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitMask {
    bits: Vec<u8>,
}

impl BitMask {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Mask("mask entries must be 0 or 1".into()));
        }
        Ok(BitMask { bits })
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BitMask {
            bits: bits.iter().map(|&b| b as u8).collect(),
        }
    }

    pub fn ones(len: usize) -> Self {
        BitMask { bits: vec![1; len] }
    }

    pub fn zeros(len: usize) -> Self {
        BitMask { bits: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v as u8;
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Positions of the 1 entries, in increasing order.
    pub fn ones_iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }

    pub fn complement(&self) -> Self {
        BitMask {
            bits: self.bits.iter().map(|&b| 1 - b).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        BitMask {
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| a & b)
                .collect(),
        }
    }

    pub fn or(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        BitMask {
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| a | b)
                .collect(),
        }
    }

    /// self & !other.
    pub fn minus(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        BitMask {
            bits: self
                .bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| a & (1 - b))
                .collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .all(|(&a, &b)| a <= b)
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.bits
            .iter()
            .zip(other.bits.iter())
            .any(|(&a, &b)| a & b == 1)
    }

    /// Mask entries as reals, for feeding to conditioning networks.
    pub fn to_real_vec<F: Real>(&self) -> Vec<F> {
        self.bits
            .iter()
            .map(|&b| if b == 1 { F::one() } else { F::zero() })
            .collect()
    }
}

impl fmt::Display for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for BitMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for ch in s.chars() {
            match ch {
                '0' => bits.push(0),
                '1' => bits.push(1),
                ',' | ' ' => {}
                other => return Err(Error::Mask(format!("invalid mask character `{other}`"))),
            }
        }
        Ok(BitMask { bits })
    }
}

/// Variable-length slice of a d-dimensional vector together with the mask
/// that selected it.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedVector<F: Real = f64> {
    values: Vec<F>,
    mask: BitMask,
}

impl<F: Real> MaskedVector<F> {
    pub fn new(values: Vec<F>, mask: BitMask) -> Result<Self> {
        if values.len() != mask.popcount() {
            return Err(Error::Mask(format!(
                "masked vector has {} values but mask popcount is {}",
                values.len(),
                mask.popcount()
            )));
        }
        Ok(MaskedVector { values, mask })
    }

    pub fn empty(d: usize) -> Self {
        MaskedVector {
            values: Vec::new(),
            mask: BitMask::zeros(d),
        }
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn mask(&self) -> &BitMask {
        &self.mask
    }

    pub fn full_dim(&self) -> usize {
        self.mask.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Zero-imputed embedding into R^d.
    pub fn zero_imputed(&self) -> Vec<F> {
        zero_impute(&self.values, &self.mask).expect("lengths validated at construction")
    }
}

/// Keep the entries of `v` where `mask` is 1, order preserved.
pub fn index_vec<F: Copy>(v: &[F], mask: &BitMask) -> Result<Vec<F>> {
    if v.len() != mask.len() {
        return Err(Error::Mask(format!(
            "cannot index length-{} vector with length-{} mask",
            v.len(),
            mask.len()
        )));
    }
    Ok(mask.ones_iter().map(|i| v[i]).collect())
}

/// Index rows then columns of a row-major matrix: `W[rows, cols]`.
pub fn index_mat<F: Copy>(
    w: &[F],
    nrows: usize,
    ncols: usize,
    rows: &BitMask,
    cols: &BitMask,
) -> Result<Vec<F>> {
    if w.len() != nrows * ncols || rows.len() != nrows || cols.len() != ncols {
        return Err(Error::Mask(format!(
            "cannot index {nrows}x{ncols} matrix with masks of length {} and {}",
            rows.len(),
            cols.len()
        )));
    }
    let mut out = Vec::with_capacity(rows.popcount() * cols.popcount());
    for r in rows.ones_iter() {
        for c in cols.ones_iter() {
            out.push(w[r * ncols + c]);
        }
    }
    Ok(out)
}

/// The zero-imputing embed: place `values` at the 1-positions of `mask`,
/// zeros elsewhere.
pub fn zero_impute<F: Real>(values: &[F], mask: &BitMask) -> Result<Vec<F>> {
    if values.len() != mask.popcount() {
        return Err(Error::Mask(format!(
            "zero_impute got {} values for a mask with popcount {}",
            values.len(),
            mask.popcount()
        )));
    }
    let mut out = vec![F::zero(); mask.len()];
    for (k, i) in mask.ones_iter().enumerate() {
        out[i] = values[k];
    }
    Ok(out)
}

/// Conditioning context of the coupling transform: embeds the kept part of
/// the target vector alongside the observed covariates.
///
/// `x_c = embed(embed(x_ua; b_u); u_embed) + embed(x_o; b)` and
/// `b_c = embed(b_u; u_embed) + b`, where `u_embed` marks the target
/// positions within R^d (`1 - b` when nothing is missing).
pub fn compose_coupling_context<F: Real>(
    x_ua: &[F],
    b_u: &BitMask,
    x_o: &MaskedVector<F>,
    b: &BitMask,
    u_embed: &BitMask,
) -> Result<(Vec<F>, Vec<u8>)> {
    if b_u.len() != u_embed.popcount() {
        return Err(Error::Mask(format!(
            "coupling split mask has length {} but there are {} target dims",
            b_u.len(),
            u_embed.popcount()
        )));
    }
    if x_o.full_dim() != b.len() || b.len() != u_embed.len() {
        return Err(Error::Mask("mask dimensions disagree".into()));
    }
    let inner = zero_impute(x_ua, b_u)?; // length |u|
    let embedded = zero_impute(&inner, u_embed)?; // length d
    let phi_o = x_o.zero_imputed();
    let x_c: Vec<F> = embedded
        .iter()
        .zip(phi_o.iter())
        .map(|(&a, &b)| a + b)
        .collect();

    let b_u_embedded = zero_impute(
        &b_u.bits().iter().map(|&v| F::cast(v as f64)).collect::<Vec<_>>(),
        u_embed,
    )?;
    let b_c: Vec<u8> = b_u_embedded
        .iter()
        .zip(b.bits().iter())
        .map(|(&a, &bb)| ((a > F::zero()) as u8) | bb)
        .collect();
    Ok((x_c, b_c))
}

/// Spec-shaped wrapper for the complete-data case (targets are `1 - b`).
pub fn compose_coupling_context_complete<F: Real>(
    x_ua: &[F],
    b_u: &BitMask,
    x_o: &MaskedVector<F>,
    b: &BitMask,
) -> Result<(Vec<F>, Vec<u8>)> {
    compose_coupling_context(x_ua, b_u, x_o, b, &b.complement())
}

/// How observed masks `b` are drawn during training and evaluation.
#[derive(Clone, Debug, PartialEq)]
pub enum MaskDistribution {
    /// Each non-missing dimension observed independently with probability p.
    Bernoulli(f64),
    /// All non-missing dimensions observed except one chosen uniformly.
    DropOneUniform,
    /// A fixed mask, intersected with the non-missing mask.
    Fixed(BitMask),
    /// Observe a contiguous index block `[start, end)`, intersected with m.
    Block { start: usize, end: usize },
}

impl MaskDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            MaskDistribution::Bernoulli(p) if !(0.0..=1.0).contains(p) => Err(Error::Mask(
                format!("bernoulli mask probability {p} outside [0, 1]"),
            )),
            MaskDistribution::Block { start, end } if end < start => Err(Error::Mask(
                format!("block mask range {start}..{end} is reversed"),
            )),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MaskDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskDistribution::Bernoulli(p) => write!(f, "bernoulli:{p}"),
            MaskDistribution::DropOneUniform => write!(f, "drop_one"),
            MaskDistribution::Fixed(m) => write!(f, "fixed:{m}"),
            MaskDistribution::Block { start, end } => write!(f, "block:{start}-{end}"),
        }
    }
}

impl FromStr for MaskDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let dist = match kind {
            "bernoulli" => {
                let p: f64 = arg
                    .ok_or_else(|| Error::Mask("bernoulli needs a probability, e.g. bernoulli:0.5".into()))?
                    .parse()
                    .map_err(|_| Error::Mask(format!("bad bernoulli probability in `{s}`")))?;
                MaskDistribution::Bernoulli(p)
            }
            "drop_one" | "drop_one_uniform" => MaskDistribution::DropOneUniform,
            "fixed" => {
                let mask: BitMask = arg
                    .ok_or_else(|| Error::Mask("fixed needs a bit string, e.g. fixed:1010".into()))?
                    .parse()?;
                MaskDistribution::Fixed(mask)
            }
            "block" => {
                let arg = arg.ok_or_else(|| Error::Mask("block needs a range, e.g. block:0-3".into()))?;
                let (a, b) = arg
                    .split_once('-')
                    .ok_or_else(|| Error::Mask(format!("bad block range `{arg}`")))?;
                MaskDistribution::Block {
                    start: a.parse().map_err(|_| Error::Mask(format!("bad block range `{arg}`")))?,
                    end: b.parse().map_err(|_| Error::Mask(format!("bad block range `{arg}`")))?,
                }
            }
            other => return Err(Error::Mask(format!("unknown mask distribution `{other}`"))),
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Draw an observed mask `b`. Dimensions missing in `m` are never observed.
pub fn sample_mask(dist: &MaskDistribution, m: &BitMask, rng: &mut impl Rng) -> BitMask {
    let d = m.len();
    let raw = match dist {
        MaskDistribution::Bernoulli(p) => {
            let mut bits = vec![0u8; d];
            for bit in bits.iter_mut() {
                *bit = (rng.random::<f64>() < *p) as u8;
            }
            BitMask { bits }
        }
        MaskDistribution::DropOneUniform => {
            let candidates: Vec<usize> = m.ones_iter().collect();
            let mut out = m.clone();
            if !candidates.is_empty() {
                let drop = candidates[rng.random_range(0..candidates.len())];
                out.set(drop, false);
            }
            out
        }
        MaskDistribution::Fixed(mask) => {
            debug_assert_eq!(mask.len(), d);
            mask.clone()
        }
        MaskDistribution::Block { start, end } => {
            let mut bits = vec![0u8; d];
            for (i, bit) in bits.iter_mut().enumerate() {
                *bit = (i >= *start && i < *end) as u8;
            }
            BitMask { bits }
        }
    };
    raw.and(m)
}

/// Split a complete vector into observed and target parts:
/// `x_o = x[b]`, `x_u = x[m & !b]`. Missing entries appear in neither.
pub fn split_missing<F: Real>(
    x: &[F],
    b: &BitMask,
    m: &BitMask,
) -> Result<(MaskedVector<F>, MaskedVector<F>)> {
    if x.len() != b.len() || b.len() != m.len() {
        return Err(Error::Mask(format!(
            "split_missing length mismatch: x {} b {} m {}",
            x.len(),
            b.len(),
            m.len()
        )));
    }
    if !b.is_subset_of(m) {
        return Err(Error::Mask(
            "observed mask marks a missing dimension as observed".into(),
        ));
    }
    let target = m.minus(b);
    let x_o = MaskedVector::new(index_vec(x, b)?, b.clone())?;
    let x_u = MaskedVector::new(index_vec(x, &target)?, target)?;
    Ok((x_o, x_u))
}
