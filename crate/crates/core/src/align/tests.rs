use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::domain::Domain;
use crate::error::Error;
use crate::exec::Exec;
use crate::rng;

fn gaussian(n: usize, dim: usize, shift: f64, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, "test-gaussian", 0);
    let data = (0..n * dim).map(|_| {
        let z: f64 = StandardNormal.sample(&mut r);
        z + shift
    }).collect::<Vec<f64>>();
    Matrix::from_vec(n, dim, data).unwrap()
}

fn toy_shape() -> AeShape {
    AeShape {
        input: 16,
        hidden: 32,
        code: 16,
    }
}

#[test]
fn mmd_of_a_sample_with_itself_is_zero_and_symmetric() {
    let x = gaussian(40, 8, 0.0, 1);
    let y = gaussian(30, 8, 0.5, 2);
    let k = KernelConfig::default();
    assert!(mmd(&x, &x, &k).unwrap().abs() <= 1e-9);
    assert_eq!(mmd(&x, &y, &k).unwrap(), mmd(&y, &x, &k).unwrap());
    assert!(mmd(&x, &y, &k).unwrap() > 0.0);
    let z = gaussian(5, 4, 0.0, 3);
    assert!(matches!(mmd(&x, &z, &k), Err(Error::Shape(_))));
    assert!(KernelConfig::fixed(0.0).validate().is_err());
}

#[test]
fn mmd_matches_a_direct_triple_loop() {
    let x = gaussian(7, 3, 0.0, 4);
    let y = gaussian(5, 3, 1.0, 5);
    let h = 1.3;
    let k = |a: &[f64], b: &[f64]| (-a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / (2.0 * h * h)).exp();
    let mean = |a: &Matrix, b: &Matrix| {
        let mut s = 0.0;
        for i in 0..a.rows {
            for j in 0..b.rows {
                s += k(a.row(i), b.row(j));
            }
        }
        s / (a.rows * b.rows) as f64
    };
    let want = mean(&x, &x) + mean(&y, &y) - 2.0 * mean(&x, &y);
    let got = mmd(&x, &y, &KernelConfig::fixed(h)).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn mmd_gradient_matches_finite_differences() {
    let x = gaussian(6, 4, 0.0, 6);
    let y = gaussian(5, 4, 0.7, 7);
    let gamma = 0.3;
    let (_, dx, dy) = mmd_grad(&x, &y, gamma).unwrap();
    let eps = 1e-5;
    for (which, base, g) in [(0, &x, &dx), (1, &y, &dy)] {
        for k in 0..base.data.len() {
            let mut up = base.clone();
            up.data[k] += eps;
            let mut down = base.clone();
            down.data[k] -= eps;
            let f = |m: &Matrix| {
                if which == 0 {
                    mmd_grad(m, &y, gamma).unwrap().0
                } else {
                    mmd_grad(&x, m, gamma).unwrap().0
                }
            };
            let numeric = (f(&up) - f(&down)) / (2.0 * eps);
            assert!((numeric - g.data[k]).abs() < 1e-8, "{numeric} vs {}", g.data[k]);
        }
    }
}

#[test]
fn permutation_test_separates_shift_from_noise() {
    let k = KernelConfig::default();
    let x = gaussian(120, 8, 0.0, 10);
    let same = gaussian(120, 8, 0.0, 11);
    let shifted = gaussian(120, 8, 1.0, 12);
    let a = permutation_test(&x, &same, &k, 100, 0.99, 3, Exec::Sequential).unwrap();
    let b = permutation_test(&x, &shifted, &k, 100, 0.99, 3, Exec::Sequential).unwrap();
    assert!(!a.rejects());
    assert!(b.rejects());
    assert!((b.statistic - mmd(&x, &shifted, &k).unwrap()).abs() < 1e-12);
}

#[test]
fn permutation_null_does_not_depend_on_threads() {
    let k = KernelConfig::default();
    let x = gaussian(30, 4, 0.0, 1);
    let y = gaussian(30, 4, 0.2, 2);
    let a = permutation_test(&x, &y, &k, 50, 0.99, 9, Exec::Sequential).unwrap();
    let b = permutation_test(&x, &y, &k, 50, 0.99, 9, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn alpha_schedule_shape() {
    assert_eq!(alpha_schedule(0.0).unwrap(), 0.0);
    let one = 2.0 / (1.0 + (-10.0f64).exp()) - 1.0;
    assert_eq!(alpha_schedule(1.0).unwrap(), one);
    assert!((one - 0.99990).abs() < 1e-5);
    let grid: Vec<f64> = (0..100).map(|i| alpha_schedule(i as f64 / 99.0).unwrap()).collect();
    assert!(grid.windows(2).all(|w| w[1] > w[0]));
    assert!(matches!(alpha_schedule(1.01), Err(Error::Domain(_))));
    assert!(alpha_schedule(-0.1).is_err());
}

#[test]
fn linear_squared_loss_gradient_is_exact() {
    let mut params = ParamSet::new();
    let mut r = rng::stream(1, "lin", 0);
    let layer = Dense::new(&mut params, "lin", 5, 3, &mut r);
    let x = gaussian(4, 5, 0.0, 2);
    let t = gaussian(4, 3, 0.0, 3);
    let loss = |p: &ParamSet| {
        let y = layer.forward(p, &x);
        y.data.iter().zip(&t.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
    };
    let y = layer.forward(&params, &x);
    let dy = Matrix::from_vec(4, 3, y.data.iter().zip(&t.data).map(|(a, b)| 2.0 * (a - b)).collect()).unwrap();
    let mut grads = params.zeros_like();
    layer.backward(&params, &x, &dy, &mut grads);
    let check = grad_check(&params, &grads, 1e-4, |p| (loss(p), 0));
    assert_eq!(check.checked, params.len());
    assert!(check.max_rel_error < 1e-8, "{check:?}");
}

#[test]
fn adversarial_gradient_passes_finite_differences() {
    let model = AlignModel::adversarial(toy_shape(), true, 5);
    let xr = gaussian(6, 16, 0.0, 1);
    let xs = gaussian(6, 16, 0.8, 2);
    let c = grad_check_adversarial(&model, &xr, &xs, 0.7, 1e-4).unwrap();
    assert!(c.checked > c.skipped * 10, "{c:?}");
    assert!(c.max_rel_error < 1e-4, "{c:?}");
}

#[test]
fn mmd_gradient_passes_finite_differences() {
    let model = AlignModel::per_domain(toy_shape(), &[Domain::R, Domain::W, Domain::H], 6);
    let xr = gaussian(6, 16, 0.0, 1);
    let xw = gaussian(5, 16, 0.8, 2);
    let xh = gaussian(4, 16, -0.5, 3);
    let syn = [
        SyntheticBatch {
            domain: Domain::W,
            x: &xw,
            weight: 0.4,
        },
        SyntheticBatch {
            domain: Domain::H,
            x: &xh,
            weight: 0.6,
        },
    ];
    let c = grad_check_mmd(&model, &xr, &syn, &KernelConfig::default(), 1e-4).unwrap();
    assert!(c.checked > c.skipped * 10, "{c:?}");
    assert!(c.max_rel_error < 1e-4, "{c:?}");
}

fn encoder_entries(model: &AlignModel, g: &ParamSet) -> Vec<f64> {
    model
        .params
        .names()
        .iter()
        .enumerate()
        .filter(|(_, n)| n.contains(".enc"))
        .flat_map(|(i, _)| g.tensor(i).to_vec())
        .collect()
}

#[test]
fn reversal_is_an_exact_negative_multiple() {
    let model = AlignModel::adversarial(toy_shape(), true, 8);
    let xr = gaussian(8, 16, 0.0, 1);
    let xs = gaussian(8, 16, 1.0, 2);
    let alpha = 0.37;
    let plain = GrlWeights {
        recon: 0.0,
        head: 1.0,
        encoder: 1.0,
    };
    let reversed = GrlWeights {
        encoder: -alpha,
        ..plain
    };
    let (_, _, g0) = adversarial_gradients(&model, &xr, &xs, plain).unwrap();
    let (_, _, g1) = adversarial_gradients(&model, &xr, &xs, reversed).unwrap();
    let (a, b) = (encoder_entries(&model, &g0), encoder_entries(&model, &g1));
    assert!(a.iter().any(|&v| v != 0.0));
    for (u, r) in a.iter().zip(&b) {
        assert_eq!(*r, -alpha * u);
    }
}

#[test]
fn zero_alpha_leaves_pure_reconstruction_on_the_encoder() {
    let model = AlignModel::adversarial(toy_shape(), true, 9);
    let xr = gaussian(8, 16, 0.0, 1);
    let xs = gaussian(8, 16, 1.0, 2);
    let recon_only = GrlWeights {
        recon: 1.0,
        head: 0.0,
        encoder: 0.0,
    };
    let at_start = GrlWeights {
        recon: 1.0,
        head: 1.0,
        encoder: -alpha_schedule(0.0).unwrap(),
    };
    let (_, _, g0) = adversarial_gradients(&model, &xr, &xs, recon_only).unwrap();
    let (_, _, g1) = adversarial_gradients(&model, &xr, &xs, at_start).unwrap();
    assert_eq!(encoder_entries(&model, &g0), encoder_entries(&model, &g1));
}

#[test]
fn zero_weights_reduce_to_independent_autoencoders() {
    let mut cfg = AlignConfig::mmd_default();
    cfg.shape = toy_shape();
    cfg.alpha = 0.0;
    cfg.beta = 0.0;
    let xr = gaussian(8, 16, 0.0, 1);
    let xw = gaussian(8, 16, 1.0, 2);
    let mut joint = AlignModel::per_domain(cfg.shape, &[Domain::R, Domain::W], 3);
    let mut solo = joint.clone();
    let mut opt = Adam::new(cfg.optimizer.clone(), &joint.params);
    let mut opt_solo = Adam::new(cfg.optimizer.clone(), &solo.params);
    let report = mmd_align_train_step(&xr, Some(&xw), None, &mut joint, &mut opt, &cfg).unwrap();
    assert_eq!(report.l_total, report.recompute_total());
    assert_eq!(report.l_total, report.l_r);
    // the same update driven by reconstruction alone
    let syn = [SyntheticBatch {
        domain: Domain::W,
        x: &xw,
        weight: 0.0,
    }];
    let (_, g) = mmd_gradients(&solo, &xr, &syn, &[1.0]).unwrap();
    opt_solo.step(&mut solo.params, &g);
    assert_eq!(joint.params, solo.params);
}

#[test]
fn reported_total_is_the_sum_of_its_parts() {
    let cfg = AlignConfig {
        shape: toy_shape(),
        ..AlignConfig::mmd_default()
    };
    let mut m = AlignModel::per_domain(cfg.shape, &[Domain::R, Domain::W, Domain::H], 1);
    let mut opt = Adam::new(cfg.optimizer.clone(), &m.params);
    let (xr, xw, xh) = (gaussian(8, 16, 0.0, 1), gaussian(8, 16, 1.0, 2), gaussian(8, 16, -1.0, 3));
    let r = mmd_align_train_step(&xr, Some(&xw), Some(&xh), &mut m, &mut opt, &cfg).unwrap();
    assert_eq!(r.l_d.len(), 2);
    assert_eq!(r.l_d[0].weight, 0.4);
    assert_eq!(r.l_d[1].weight, 0.6);
    assert_eq!(r.l_total, r.l_r + 0.4 * r.l_d[0].value + 0.6 * r.l_d[1].value);
}

#[test]
fn grad_check_error_grows_with_injected_bugs() {
    let model = AlignModel::adversarial(toy_shape(), false, 2);
    let xr = gaussian(4, 16, 0.0, 1);
    let xs = gaussian(4, 16, 1.0, 2);
    let w = GrlWeights {
        recon: 1.0,
        head: 0.5,
        encoder: 0.5,
    };
    let (_, _, grads) = adversarial_gradients(&model, &xr, &xs, w).unwrap();
    let mut noise = grads.zeros_like();
    let mut r = rng::stream(4, "bug", 0);
    for v in noise.iter_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let mut errors = Vec::new();
    for scale in [0.0, 1e-3, 1e-2, 1e-1, 0.5] {
        // each entry is off by up to `scale` of its own size
        let mut buggy = grads.clone();
        for (b, u) in buggy.iter_mut().zip(noise.iter()) {
            *b *= 1.0 + scale * u;
        }
        let mut m = model.clone();
        let c = grad_check(&model.params, &buggy, 1e-4, |p| {
            m.params.clone_from(p);
            let e = super::train::adversarial_eval(&m, &xr, &xs).unwrap();
            (e.l_r + 0.5 * e.l_d, e.signature)
        });
        errors.push(c.max_rel_error);
    }
    assert!(errors[0] < 1e-4);
    assert!(errors.windows(2).all(|e| e[1] > e[0]), "{errors:?}");
}

#[test]
fn adam_with_zero_gradient_and_no_decay_is_a_no_op() {
    let m = AlignModel::adversarial(toy_shape(), false, 1);
    let mut params = m.params.clone();
    let cfg = AdamConfig {
        weight_decay: 0.0,
        ..AlignConfig::mmd_default().optimizer
    };
    let mut opt = Adam::new(cfg, &params);
    let zero = params.zeros_like();
    for _ in 0..5 {
        opt.step(&mut params, &zero);
    }
    assert_eq!(params, m.params);
}

#[test]
fn adam_decay_shrinks_weights_under_zero_gradient() {
    let m = AlignModel::adversarial(toy_shape(), false, 1);
    let mut params = m.params.clone();
    let mut opt = Adam::new(AlignConfig::mmd_default().optimizer, &params);
    let zero = params.zeros_like();
    opt.step(&mut params, &zero);
    let before: f64 = m.params.iter().map(|x| x.abs()).sum();
    let after: f64 = params.iter().map(|x| x.abs()).sum();
    assert!(after < before);
}

#[test]
fn training_is_deterministic_and_reduces_mmd() {
    let cfg = AlignConfig {
        shape: toy_shape(),
        batch_size: 32,
        ..AlignConfig::mmd_default()
    };
    let xr = gaussian(200, 16, 0.0, 1);
    let xw = gaussian(200, 16, 1.0, 2);
    let run = || {
        let mut m = AlignModel::per_domain(cfg.shape, &[Domain::R, Domain::W], 4);
        let curve = train_mmd_alignment(&mut m, &xr, Some(&xw), None, &cfg, 200, 7).unwrap();
        (m, curve)
    };
    let (m0, c0) = run();
    let (m1, c1) = run();
    assert_eq!(c0, c1);
    assert_eq!(m0.params, m1.params);
    let init = AlignModel::per_domain(cfg.shape, &[Domain::R, Domain::W], 4);
    let k = KernelConfig::default();
    let before = mmd(&init.encode(Domain::R, &xr).unwrap(), &init.encode(Domain::W, &xw).unwrap(), &k).unwrap();
    let after = mmd(&m0.encode(Domain::R, &xr).unwrap(), &m0.encode(Domain::W, &xw).unwrap(), &k).unwrap();
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

#[test]
fn adversarial_training_runs_and_reports_scheduled_alpha() {
    let cfg = AlignConfig {
        shape: toy_shape(),
        batch_size: 16,
        ..AlignConfig::adversarial_default()
    };
    let xr = gaussian(64, 16, 0.0, 1);
    let xs = gaussian(64, 16, 1.0, 2);
    let mut m = AlignModel::adversarial(cfg.shape, true, 3);
    let curve = train_adversarial(&mut m, &xr, &xs, &cfg, 20, 1).unwrap();
    assert_eq!(curve[0].l_d[0].weight, 0.0);
    assert!(curve.windows(2).all(|w| w[1].l_d[0].weight > w[0].l_d[0].weight));
    assert!(curve.iter().all(|r| r.l_total == r.recompute_total()));
}

#[test]
fn non_finite_input_is_a_divergence() {
    let cfg = AlignConfig {
        shape: toy_shape(),
        ..AlignConfig::mmd_default()
    };
    let mut m = AlignModel::per_domain(cfg.shape, &[Domain::R, Domain::W], 1);
    let mut opt = Adam::new(cfg.optimizer.clone(), &m.params);
    let mut xr = gaussian(4, 16, 0.0, 1);
    xr.data[3] = f64::NAN;
    let xw = gaussian(4, 16, 0.0, 2);
    let err = mmd_align_train_step(&xr, Some(&xw), None, &mut m, &mut opt, &cfg).unwrap_err();
    assert!(matches!(err, Error::Divergence { step: 0, .. }), "{err:?}");
}

#[test]
fn checkpoint_round_trip() {
    let m = AlignModel::adversarial(toy_shape(), true, 1);
    let bytes = m.params.to_bytes();
    let back = ParamSet::from_bytes(&bytes, "mem").unwrap();
    assert_eq!(back, m.params);
    assert!(ParamSet::from_bytes(&bytes[..bytes.len() - 1], "mem").is_err());
    let dir = tempfile::tempdir().unwrap();
    let curve = vec![LossReport {
        l_r: 1.0,
        l_d: vec![LossTerm {
            name: "L_DW".into(),
            weight: 0.4,
            value: 0.5,
        }],
        l_total: 1.2,
    }];
    let p = dir.path().join("loss.csv");
    write_loss_curve(&p, &curve).unwrap();
    assert_eq!(std::fs::read_to_string(p).unwrap(), "step,L_R,L_DW,L_total\n0,1,0.5,1.2\n");
}
