use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{ArchDescriptor, BaseSpec, LayerSpec};
use crate::context::ConditioningContext;
use crate::mask::{split_missing, BitMask, MaskedVector};
use crate::scalar::LN_TWO_PI;
use crate::standardize::Standardizer;
use crate::tensor::Tensor;
use crate::testutil::rel_err;

use super::*;

fn gaussian_base_arch(d: usize, transforms: Vec<LayerSpec>) -> ArchDescriptor {
    ArchDescriptor {
        d,
        transforms,
        base: BaseSpec::Gaussian { hidden: 4, mlp_layers: 0 },
    }
}

fn zero_params(model: &mut AcflowModel<f64>, names: &[&str]) {
    for name in names {
        let id = model.store().find(name).unwrap();
        let shape = model.store().value(id).shape().to_vec();
        model.store_mut().set_value(id, Tensor::zeros(&shape)).unwrap();
    }
}

fn set_param(model: &mut AcflowModel<f64>, name: &str, t: Tensor<f64>) {
    let id = model.store().find(name).unwrap();
    model.store_mut().set_value(id, t).unwrap();
}

#[test]
fn empty_stack_standard_normal_at_zero() {
    let model = AcflowModel::<f64>::new(gaussian_base_arch(1, vec![]), 0).unwrap();
    let ctx = ConditioningContext::unconditional(BitMask::ones(1)).unwrap();
    let lp = model.cond_log_prob(&[0.0], &ctx).unwrap();
    assert!((lp - (-0.5 * LN_TWO_PI)).abs() < 1e-12);
    assert!((lp - (-0.9189385)).abs() < 1e-6);
}

#[test]
fn single_diagonal_scaling_change_of_variables() {
    // z = 2x with a standard-normal base: log p(0) = ln 2 - 0.5 ln(2 pi)
    let arch = gaussian_base_arch(
        1,
        vec![LayerSpec::Linear { hidden: 2, mlp_layers: 0, rank: 0 }],
    );
    let mut model = AcflowModel::<f64>::new(arch, 0).unwrap();
    zero_params(&mut model, &["t0.net.l0.w", "t0.net.l0.b"]);
    set_param(&mut model, "t0.base", Tensor::matrix(1, 1, vec![2.0]).unwrap());
    let ctx = ConditioningContext::unconditional(BitMask::ones(1)).unwrap();
    let lp = model.cond_log_prob(&[0.0], &ctx).unwrap();
    assert!((lp - (2.0f64.ln() - 0.5 * LN_TWO_PI)).abs() < 1e-12);
}

#[test]
fn empty_target_set_returns_zero() {
    let model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    let b = BitMask::ones(2);
    let ctx = ConditioningContext::from_full(&[0.5, -0.5], &b).unwrap();
    assert_eq!(model.cond_log_prob(&[], &ctx).unwrap(), 0.0);
    let empty_query = BitMask::zeros(2);
    assert_eq!(model.marginal_log_prob(&[], &empty_query).unwrap(), 0.0);
}

#[test]
fn deterministic_base_gives_constant_samples() {
    let mut model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    // mu = (0.7, -0.3), log sigma = -40: numerically deterministic draws
    set_param(
        &mut model,
        "base.net.l0.b",
        Tensor::vector(vec![0.7, -0.3, -40.0, -40.0]),
    );
    let ctx = ConditioningContext::unconditional(BitMask::ones(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = model.cond_sample(&ctx, 5, &mut rng).unwrap();
    for draw in draws {
        assert_eq!(draw, vec![0.7, -0.3]);
    }
}

#[test]
fn own_samples_have_finite_log_prob() {
    let arch = ArchDescriptor::layered(3, 1, 8, 1, 1);
    let model = AcflowModel::<f64>::new(arch, 3).unwrap();
    let b: BitMask = "100".parse().unwrap();
    let ctx = ConditioningContext::from_full(&[0.2, 0.0, 0.0], &b).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for draw in model.cond_sample(&ctx, 10, &mut rng).unwrap() {
        let lp = model.cond_log_prob(&draw, &ctx).unwrap();
        assert!(lp.is_finite());
    }
}

#[test]
fn best_guess_identity_stack_returns_head_means() {
    let mut model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    set_param(
        &mut model,
        "base.net.l0.b",
        Tensor::vector(vec![1.25, -2.5, 0.0, 0.0]),
    );
    let ctx = ConditioningContext::unconditional(BitMask::ones(2)).unwrap();
    assert_eq!(model.best_guess(&ctx).unwrap(), vec![1.25, -2.5]);
}

#[test]
fn best_guess_inverts_affine_map() {
    // stack z = 2x + 1, latent mean 3 -> best guess (3 - 1) / 2 = 1
    let arch = gaussian_base_arch(
        1,
        vec![LayerSpec::Linear { hidden: 2, mlp_layers: 0, rank: 0 }],
    );
    let mut model = AcflowModel::<f64>::new(arch, 0).unwrap();
    zero_params(&mut model, &["t0.net.l0.w"]);
    set_param(&mut model, "t0.net.l0.b", Tensor::vector(vec![0.0, 1.0])); // W_f = 0, t_f = 1
    set_param(&mut model, "t0.base", Tensor::matrix(1, 1, vec![2.0]).unwrap());
    set_param(&mut model, "base.net.l0.b", Tensor::vector(vec![3.0, 0.0]));
    let ctx = ConditioningContext::unconditional(BitMask::ones(1)).unwrap();
    let bg = model.best_guess(&ctx).unwrap();
    assert!((bg[0] - 1.0).abs() < 1e-12);
}

#[test]
fn loss_reduces_to_nll_cases() {
    let arch = ArchDescriptor::layered(2, 1, 6, 1, 1);
    let model = AcflowModel::<f64>::new(arch, 5).unwrap();
    let b: BitMask = "10".parse().unwrap();
    let ctx = ConditioningContext::from_full(&[0.3, 0.0], &b).unwrap();
    let x_u = [0.4];
    let nll = -model.cond_log_prob(&x_u, &ctx).unwrap();
    let loss0 = model
        .loss(&x_u, &ctx, &LossConfig::new(0.0).unwrap())
        .unwrap();
    assert!((loss0 - nll).abs() < 1e-12);

    // when the best guess equals x_u the penalty vanishes
    let mut model2 = AcflowModel::<f64>::new(gaussian_base_arch(1, vec![]), 0).unwrap();
    set_param(&mut model2, "base.net.l0.b", Tensor::vector(vec![0.9, 0.0]));
    let ctx2 = ConditioningContext::unconditional(BitMask::ones(1)).unwrap();
    let nll2 = -model2.cond_log_prob(&[0.9], &ctx2).unwrap();
    let loss1 = model2
        .loss(&[0.9], &ctx2, &LossConfig::new(1.0).unwrap())
        .unwrap();
    assert!((loss1 - nll2).abs() < 1e-12);

    assert!(LossConfig::new(-0.5).is_err());
}

/// Central finite difference of the loss with respect to one parameter
/// coordinate, evaluated through the public loss path.
fn fd_loss_wrt(
    model: &mut AcflowModel<f64>,
    id: crate::diff::ParamId,
    index: usize,
    h: f64,
    x_u: &[f64],
    ctx: &ConditioningContext<f64>,
    lambda: f64,
) -> f64 {
    let cfg = LossConfig::new(lambda).unwrap();
    let orig = model.store().value(id).clone();
    let mut plus = orig.clone();
    plus.data_mut()[index] += h;
    model.store_mut().set_value(id, plus).unwrap();
    let fp = model.loss(x_u, ctx, &cfg).unwrap();
    let mut minus = orig.clone();
    minus.data_mut()[index] -= h;
    model.store_mut().set_value(id, minus).unwrap();
    let fm = model.loss(x_u, ctx, &cfg).unwrap();
    model.store_mut().set_value(id, orig).unwrap();
    (fp - fm) / (2.0 * h)
}

#[test]
fn loss_gradients_match_finite_differences_both_lambdas() {
    let arch = ArchDescriptor {
        d: 2,
        transforms: vec![
            LayerSpec::Linear { hidden: 6, mlp_layers: 1, rank: 0 },
            LayerSpec::LeakyRelu { alpha: 0.01 },
            LayerSpec::RnnCoupling { hidden: 6, rnn_layers: 1, clamp: 5.0 },
        ],
        base: BaseSpec::ArGmm { components: 2, hidden: 6, rnn_layers: 1 },
    };
    let mut model = AcflowModel::<f64>::new(arch, 7).unwrap();
    let b: BitMask = "00".parse().unwrap();
    let ctx = ConditioningContext::from_full(&[0.0, 0.0], &b).unwrap();
    let x_u = vec![0.37, -0.82];
    for lambda in [0.0, 1.0] {
        let (loss, _) = model.loss_parts(&x_u, &ctx, lambda).unwrap();
        let grads = crate::diff::backward(&loss).unwrap();
        let ids: Vec<_> = model.store().ids().collect();
        let mut checked = 0;
        for id in ids {
            let numel = model.store().value(id).numel();
            for index in (0..numel).step_by(29) {
                let analytic = grads.param_grad(id).map(|t| t.data()[index]).unwrap_or(0.0);
                let fd = fd_loss_wrt(&mut model, id, index, 1e-5, &x_u, &ctx, lambda);
                assert!(
                    rel_err(analytic, fd, 1e-6) < 1e-3,
                    "lambda {lambda} {}[{index}]: {analytic} vs {fd}",
                    model.store().entry(id).name
                );
                checked += 1;
            }
        }
        assert!(checked > 20, "only {checked} coordinates sampled");
    }
}

#[test]
fn joint_equals_empty_conditioning() {
    let arch = ArchDescriptor::layered(3, 1, 8, 1, 1);
    let model = AcflowModel::<f64>::new(arch, 11).unwrap();
    let x = [0.4, -0.2, 1.1];
    let joint = model.joint_log_prob(&x).unwrap();
    let ctx = ConditioningContext::unconditional(BitMask::ones(3)).unwrap();
    let cond = model.cond_log_prob(&x, &ctx).unwrap();
    assert_eq!(joint, cond);

    // marginal with the full query mask is the joint
    let marg = model.marginal_log_prob(&x, &BitMask::ones(3)).unwrap();
    assert_eq!(marg, joint);
}

#[test]
fn raw_space_correction_applies_standardizer_jacobian() {
    let mut model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    model
        .set_standardizer(Standardizer::new(vec![1.0, -1.0], vec![2.0, 4.0]).unwrap())
        .unwrap();
    let ctx = ConditioningContext::unconditional(BitMask::ones(2)).unwrap();
    let std_nats = model.cond_log_prob(&[1.0, -1.0], &ctx).unwrap();
    let raw_nats = model.cond_log_prob_raw(&[1.0, -1.0], &ctx).unwrap();
    assert!((raw_nats - (std_nats - 8.0f64.ln())).abs() < 1e-12);
}

#[test]
fn missing_coordinates_cannot_influence_outputs() {
    let arch = ArchDescriptor::layered(3, 1, 8, 1, 1);
    let model = AcflowModel::<f64>::new(arch, 13).unwrap();
    let m: BitMask = "110".parse().unwrap();
    let b: BitMask = "100".parse().unwrap();
    for junk in [0.0, 123.0, -9e9] {
        let full = [0.8, -0.4, junk];
        let (x_o, x_u) = split_missing(&full, &b, &m).unwrap();
        let ctx = ConditioningContext::new(x_o, m.clone()).unwrap();
        let lp = model.cond_log_prob(x_u.values(), &ctx).unwrap();
        let baseline = {
            let full0 = [0.8, -0.4, 0.0];
            let (x_o0, x_u0) = split_missing(&full0, &b, &m).unwrap();
            let ctx0 = ConditioningContext::new(x_o0, m.clone()).unwrap();
            model.cond_log_prob(x_u0.values(), &ctx0).unwrap()
        };
        assert_eq!(lp, baseline);
    }
}

#[test]
fn gibbs_single_block_draws_joint_samples() {
    let mut model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    set_param(
        &mut model,
        "base.net.l0.b",
        Tensor::vector(vec![0.0, 0.0, 0.0, 0.0]),
    );
    let blocks = vec![BitMask::ones(2)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let chain = model.gibbs_chain(&[5.0, 5.0], &blocks, 3, &mut rng).unwrap();
    assert_eq!(chain.len(), 3);
    // single block = all dims: step 1 is already an independent joint draw
    for x in &chain {
        assert!(x.iter().all(|v| v.abs() < 6.0));
    }
    assert_ne!(chain[0], chain[1]);
}

#[test]
fn gibbs_deterministic_base_is_constant_after_first_sweep() {
    let mut model = AcflowModel::<f64>::new(gaussian_base_arch(2, vec![]), 0).unwrap();
    set_param(
        &mut model,
        "base.net.l0.b",
        Tensor::vector(vec![0.25, -0.75, -40.0, -40.0]),
    );
    let blocks: Vec<BitMask> = vec!["10".parse().unwrap(), "01".parse().unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let chain = model.gibbs_chain(&[3.0, 3.0], &blocks, 4, &mut rng).unwrap();
    for x in &chain {
        assert_eq!(x, &chain[0]);
    }
}

#[test]
fn gibbs_rejects_overlapping_blocks_and_skips_missing() {
    let model = AcflowModel::<f64>::new(gaussian_base_arch(3, vec![]), 0).unwrap();
    let overlapping: Vec<BitMask> = vec!["110".parse().unwrap(), "011".parse().unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!(model
        .gibbs_chain(&[0.0, 0.0, 0.0], &overlapping, 2, &mut rng)
        .is_err());

    // blocks covering only two dims leave the third coordinate untouched
    let blocks: Vec<BitMask> = vec!["100".parse().unwrap(), "010".parse().unwrap()];
    let chain = model
        .gibbs_chain(&[0.0, 0.0, 42.0], &blocks, 3, &mut rng)
        .unwrap();
    for x in &chain {
        assert_eq!(x[2], 42.0);
    }
}

#[test]
fn sampler_path_is_independent_of_lambda() {
    // two models with identical parameters; lambda never enters the sampler,
    // so equal seeds give byte-identical draws
    let arch = ArchDescriptor::layered(2, 1, 8, 1, 1);
    let model_a = AcflowModel::<f64>::new(arch.clone(), 21).unwrap();
    let model_b = AcflowModel::<f64>::new(arch, 21).unwrap();
    let b: BitMask = "10".parse().unwrap();
    let ctx = ConditioningContext::from_full(&[0.1, 0.0], &b).unwrap();
    let mut rng_a = ChaCha8Rng::seed_from_u64(99);
    let mut rng_b = ChaCha8Rng::seed_from_u64(99);
    let draws_a = model_a.cond_sample(&ctx, 8, &mut rng_a).unwrap();
    let draws_b = model_b.cond_sample(&ctx, 8, &mut rng_b).unwrap();
    let bytes_a: Vec<u8> = draws_a
        .iter()
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    let bytes_b: Vec<u8> = draws_b
        .iter()
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    assert_eq!(bytes_a, bytes_b);
}

#[test]
fn context_validation() {
    let b: BitMask = "10".parse().unwrap();
    let m: BitMask = "01".parse().unwrap();
    // b marks dim 0 observed but m says it is missing
    assert!(ConditioningContext::new(
        MaskedVector::new(vec![1.0], b).unwrap(),
        m
    )
    .is_err());
}
