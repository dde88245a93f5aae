//! The assembled flow: transform stack + latent likelihood + standardizer.
//! Conditional log-likelihood, sampling, best guess, the training loss,
//! joint/marginal special cases, and block Gibbs chains.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{ArchDescriptor, BaseSpec, LayerSpec};
use crate::context::{ConditioningContext, CtxNodes};
use crate::diff::{Node, ParamStore};
use crate::error::{Error, Result};
use crate::likelihood::{AutoregressiveGmm, BaseLikelihood, GaussianLikelihood};
use crate::mask::{BitMask, MaskedVector};
use crate::scalar::Real;
use crate::standardize::Standardizer;
use crate::transform::{
    AffineCoupling, ConditionalLinear, LeakyRelu, Reverse, RnnCoupling, Transform, TransformStack,
};

/// What the mask pipeline fed the model during training.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    /// Complete data, m = 1.
    Conditional,
    /// m taken from the dataset's non-missing mask.
    ConditionalMissing,
    /// Marginal training: targets are the complement of the sampled mask and
    /// nothing is observed (b = 0, m = 1 - b_sampled).
    Marginal,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::Conditional => "conditional",
            TrainMode::ConditionalMissing => "conditional_missing",
            TrainMode::Marginal => "marginal",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conditional" => Ok(TrainMode::Conditional),
            "conditional_missing" | "conditional-missing" => Ok(TrainMode::ConditionalMissing),
            "marginal" => Ok(TrainMode::Marginal),
            other => Err(Error::Config(format!("unknown training mode `{other}`"))),
        }
    }
}

/// Weight of the best-guess penalty in the training loss.
#[derive(Clone, Copy, Debug)]
pub struct LossConfig {
    pub lambda: f64,
}

impl LossConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be finite and non-negative, got {lambda}"
            )));
        }
        Ok(LossConfig { lambda })
    }
}

pub struct AcflowModel<F: Real = f64> {
    d: usize,
    stack: TransformStack,
    base: BaseLikelihood,
    store: ParamStore<F>,
    standardizer: Standardizer<F>,
    arch: ArchDescriptor,
    trained_mode: Option<TrainMode>,
}

impl<F: Real> AcflowModel<F> {
    /// Build a model with freshly initialized parameters. Identical
    /// (arch, seed) pairs produce bit-identical parameters.
    pub fn new(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        let d = arch.d;
        if d == 0 {
            return Err(Error::Config("model dimension must be positive".into()));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut transforms = Vec::with_capacity(arch.transforms.len());
        for (i, spec) in arch.transforms.iter().enumerate() {
            let name = format!("t{i}");
            let t = match spec {
                LayerSpec::AffineCoupling { hidden, mlp_layers, clamp } => Transform::AffineCoupling(
                    AffineCoupling::init(&mut store, &name, d, *hidden, *mlp_layers, *clamp, &mut rng)?,
                ),
                LayerSpec::Linear { hidden, mlp_layers, rank } => {
                    let rank = if *rank == 0 { d } else { *rank };
                    Transform::Linear(ConditionalLinear::init(
                        &mut store, &name, d, *hidden, *mlp_layers, rank, &mut rng,
                    )?)
                }
                LayerSpec::RnnCoupling { hidden, rnn_layers, clamp } => Transform::RnnCoupling(
                    RnnCoupling::init(&mut store, &name, d, *hidden, *rnn_layers, *clamp, &mut rng)?,
                ),
                LayerSpec::LeakyRelu { alpha } => Transform::LeakyRelu(LeakyRelu::new(*alpha)?),
                LayerSpec::Reverse => Transform::Reverse(Reverse),
            };
            transforms.push(t);
        }
        let base = match &arch.base {
            BaseSpec::Gaussian { hidden, mlp_layers } => BaseLikelihood::Gaussian(
                GaussianLikelihood::init(&mut store, "base", d, *hidden, *mlp_layers, &mut rng)?,
            ),
            BaseSpec::ArGmm { components, hidden, rnn_layers } => {
                BaseLikelihood::ArGmm(AutoregressiveGmm::init(
                    &mut store, "base", d, *components, *hidden, *rnn_layers, &mut rng,
                )?)
            }
        };
        Ok(AcflowModel {
            d,
            stack: TransformStack::new(transforms),
            base,
            store,
            standardizer: Standardizer::identity(d),
            arch,
            trained_mode: None,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn stack(&self) -> &TransformStack {
        &self.stack
    }

    pub fn base(&self) -> &BaseLikelihood {
        &self.base
    }

    pub fn store(&self) -> &ParamStore<F> {
        &self.store
    }

    pub(crate) fn store_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.store
    }

    pub fn standardizer(&self) -> &Standardizer<F> {
        &self.standardizer
    }

    pub fn set_standardizer(&mut self, s: Standardizer<F>) -> Result<()> {
        if s.d() != self.d {
            return Err(Error::Data(format!(
                "standardizer dimension {} does not match model dimension {}",
                s.d(),
                self.d
            )));
        }
        self.standardizer = s;
        Ok(())
    }

    pub fn trained_mode(&self) -> Option<TrainMode> {
        self.trained_mode
    }

    pub fn set_trained_mode(&mut self, mode: TrainMode) {
        self.trained_mode = Some(mode);
    }

    fn check_ctx(&self, ctx: &ConditioningContext<F>) -> Result<()> {
        if ctx.d() != self.d {
            return Err(Error::Mask(format!(
                "context dimension {} does not match model dimension {}",
                ctx.d(),
                self.d
            )));
        }
        Ok(())
    }

    /// Graph-side context with standardized observed values.
    fn ctx_nodes(&self, ctx: &ConditioningContext<F>) -> Result<CtxNodes<F>> {
        let std_values = self
            .standardizer
            .standardize_subset(ctx.x_o().values(), ctx.b());
        let std_ctx = ConditioningContext::new(
            MaskedVector::new(std_values, ctx.b().clone())?,
            ctx.m().clone(),
        )?;
        Ok(CtxNodes::new(&std_ctx))
    }

    fn standardized_targets(&self, x_u: &[F], ctx: &ConditioningContext<F>) -> Result<Vec<F>> {
        let target = ctx.target();
        if x_u.len() != target.popcount() {
            return Err(Error::Mask(format!(
                "x_u has {} entries but the context marks {} target dims",
                x_u.len(),
                target.popcount()
            )));
        }
        if x_u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("target values must be finite".into()));
        }
        Ok(self.standardizer.standardize_subset(x_u, &target))
    }

    /// log p(x_u | x_o, b, m) in standardized nats. The empty target set
    /// yields 0 (empty product).
    pub fn cond_log_prob(&self, x_u: &[F], ctx: &ConditioningContext<F>) -> Result<F> {
        self.cond_log_prob_node(x_u, ctx)?.scalar_value()
    }

    fn cond_log_prob_node(&self, x_u: &[F], ctx: &ConditioningContext<F>) -> Result<Node<F>> {
        self.check_ctx(ctx)?;
        let nodes = self.ctx_nodes(ctx)?;
        let x_std = self.standardized_targets(x_u, ctx)?;
        let x_node = Node::vector_const(x_std);
        let res = self.stack.forward(&self.store, &x_node, &nodes)?;
        let lp = self.base.log_prob(&self.store, &res.output, &nodes)?;
        lp.add(&res.logdet)
    }

    /// Jacobian correction to convert standardized nats into raw-space nats
    /// for this context's target dimensions: `-sum(log std)`.
    pub fn raw_space_correction(&self, ctx: &ConditioningContext<F>) -> F {
        -self.standardizer.log_std_sum(&ctx.target())
    }

    /// log p in raw-space nats.
    pub fn cond_log_prob_raw(&self, x_u: &[F], ctx: &ConditioningContext<F>) -> Result<F> {
        Ok(self.cond_log_prob(x_u, ctx)? + self.raw_space_correction(ctx))
    }

    /// Draw `n` independent imputations of the target dimensions, returned
    /// in raw space.
    pub fn cond_sample(
        &self,
        ctx: &ConditioningContext<F>,
        n: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<F>>> {
        self.check_ctx(ctx)?;
        let nodes = self.ctx_nodes(ctx)?;
        let target = ctx.target();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z = self.base.sample(&self.store, &nodes, rng)?;
            let x_std = self
                .stack
                .inverse(&self.store, &Node::vector_const(z), &nodes)?;
            out.push(
                self.standardizer
                    .unstandardize_subset(x_std.value().data(), &target),
            );
        }
        Ok(out)
    }

    /// Single best-guess imputation: invert the stack at the latent mean.
    pub fn best_guess(&self, ctx: &ConditioningContext<F>) -> Result<Vec<F>> {
        self.check_ctx(ctx)?;
        let nodes = self.ctx_nodes(ctx)?;
        let zbar = self.base.mean(&self.store, &nodes)?;
        let x_std = self.stack.inverse(&self.store, &zbar, &nodes)?;
        Ok(self
            .standardizer
            .unstandardize_subset(x_std.value().data(), &ctx.target()))
    }

    /// Training loss (standardized space): `-log p(x_u | x_o, b) +
    /// lambda * ||q^{-1}(z_mean) - x_u||^2`. Returns the loss node and the
    /// NLL value. The penalty touches only this point; the sampler is
    /// untouched by lambda.
    pub(crate) fn loss_parts(
        &self,
        x_u: &[F],
        ctx: &ConditioningContext<F>,
        lambda: f64,
    ) -> Result<(Node<F>, F)> {
        self.check_ctx(ctx)?;
        let nodes = self.ctx_nodes(ctx)?;
        let x_std = self.standardized_targets(x_u, ctx)?;
        let x_node = Node::vector_const(x_std);
        let res = self.stack.forward(&self.store, &x_node, &nodes)?;
        let lp = self.base.log_prob(&self.store, &res.output, &nodes)?;
        let nll = lp.add(&res.logdet)?.neg();
        let nll_value = nll.scalar_value()?;
        let loss = if lambda > 0.0 {
            let zbar = self.base.mean(&self.store, &nodes)?;
            let bg = self.stack.inverse(&self.store, &zbar, &nodes)?;
            let penalty = bg.sub(&x_node)?.square().sum();
            nll.add(&penalty.scale(F::cast(lambda)))?
        } else {
            nll
        };
        Ok((loss, nll_value))
    }

    /// Loss value for external callers.
    pub fn loss(&self, x_u: &[F], ctx: &ConditioningContext<F>, cfg: &LossConfig) -> Result<F> {
        self.loss_parts(x_u, ctx, cfg.lambda)?.0.scalar_value()
    }

    /// Joint likelihood: condition on the empty set (b = 0, m = 1).
    pub fn joint_log_prob(&self, x: &[F]) -> Result<F> {
        let ctx = ConditioningContext::unconditional(BitMask::ones(self.d))?;
        self.cond_log_prob(x, &ctx)
    }

    pub fn joint_log_prob_raw(&self, x: &[F]) -> Result<F> {
        let ctx = ConditioningContext::unconditional(BitMask::ones(self.d))?;
        self.cond_log_prob_raw(x, &ctx)
    }

    /// Marginal likelihood of the queried dimensions: the queried dims are
    /// the unobserved targets (b = 0, m = query). Meaningful numbers need a
    /// model trained in marginal mode; callers can check `trained_mode`.
    pub fn marginal_log_prob(&self, x_sub: &[F], query: &BitMask) -> Result<F> {
        if query.len() != self.d {
            return Err(Error::Mask(format!(
                "query mask has length {} for a {}-dimensional model",
                query.len(),
                self.d
            )));
        }
        let ctx = ConditioningContext::unconditional(query.clone())?;
        self.cond_log_prob(x_sub, &ctx)
    }

    pub fn marginal_log_prob_raw(&self, x_sub: &[F], query: &BitMask) -> Result<F> {
        let correction = -self.standardizer.log_std_sum(query);
        Ok(self.marginal_log_prob(x_sub, query)? + correction)
    }

    /// Block Gibbs sampling. Blocks must be disjoint and cover exactly the
    /// non-missing mask implied by their union. Each sweep resamples every
    /// block conditioned on the rest; the full vector is recorded after each
    /// sweep (raw space).
    pub fn gibbs_chain(
        &self,
        x_init: &[F],
        partition: &[BitMask],
        steps: usize,
        rng: &mut impl Rng,
    ) -> Result<Vec<Vec<F>>> {
        if x_init.len() != self.d {
            return Err(Error::Mask(format!(
                "initial vector has length {}, model dimension is {}",
                x_init.len(),
                self.d
            )));
        }
        if partition.is_empty() {
            return Err(Error::Mask("gibbs needs at least one block".into()));
        }
        let mut union = BitMask::zeros(self.d);
        let mut total = 0usize;
        for block in partition {
            if block.len() != self.d {
                return Err(Error::Mask("block mask length mismatch".into()));
            }
            if block.intersects(&union) {
                return Err(Error::Mask("gibbs blocks overlap".into()));
            }
            total += block.popcount();
            union = union.or(block);
        }
        debug_assert_eq!(total, union.popcount());
        let m = union;
        for i in m.ones_iter() {
            if !x_init[i].is_finite() {
                return Err(Error::Data(
                    "initial vector must be finite on the sampled dimensions".into(),
                ));
            }
        }

        let mut x = x_init.to_vec();
        let mut chain = Vec::with_capacity(steps);
        for _ in 0..steps {
            for block in partition {
                let b = m.minus(block);
                let x_o = MaskedVector::new(crate::mask::index_vec(&x, &b)?, b)?;
                let ctx = ConditioningContext::new(x_o, m.clone())?;
                let draw = self.cond_sample(&ctx, 1, rng)?.pop().expect("one draw");
                for (k, i) in block.ones_iter().enumerate() {
                    x[i] = draw[k];
                }
            }
            chain.push(x.clone());
        }
        Ok(chain)
    }
}

#[cfg(test)]
mod tests;
