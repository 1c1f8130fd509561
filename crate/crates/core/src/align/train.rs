use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::autoencoder::{AeShape, AlignModel, Pass};
use super::matrix::Matrix;
use super::mmd::{mmd_grad, mmd_with_gamma, KernelConfig};
use super::params::{write_lines, Adam, AdamConfig, ParamSet};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub name: String,
    pub weight: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_r: f64,
    pub l_d: Vec<LossTerm>,
    pub l_total: f64,
}

impl LossReport {
    fn new(l_r: f64, l_d: Vec<LossTerm>) -> Self {
        let mut r = Self { l_r, l_d, l_total: 0.0 };
        r.l_total = r.recompute_total();
        r
    }

    /// `l_r + Σ weight · value`, summed left to right.
    pub fn recompute_total(&self) -> f64 {
        self.l_d.iter().fold(self.l_r, |acc, t| acc + t.weight * t.value)
    }

    fn check(&self, step: usize) -> Result<()> {
        let bad = std::iter::once(("L_R", self.l_r))
            .chain(self.l_d.iter().map(|t| (t.name.as_str(), t.value)))
            .chain(std::iter::once(("L_total", self.l_total)))
            .find(|(_, v)| !v.is_finite());
        match bad {
            Some((term, _)) => Err(Error::Divergence {
                term: term.to_string(),
                step,
            }),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Adversarial only: take alpha from `alpha_schedule(progress)`.
    pub schedule_alpha: bool,
    pub optimizer: AdamConfig,
    pub ae_epochs: usize,
    pub downstream_epochs: usize,
    pub batch_size: usize,
    pub kernel: KernelConfig,
    pub shape: AeShape,
}

impl AlignConfig {
    pub fn mmd_default() -> Self {
        Self {
            alpha: 0.4,
            beta: 0.6,
            schedule_alpha: false,
            optimizer: AdamConfig {
                lr: 1e-3,
                beta1: 0.8,
                beta2: 0.8,
                eps: 1e-4,
                weight_decay: 1e-4,
            },
            ae_epochs: 20,
            downstream_epochs: 5,
            batch_size: 64,
            kernel: KernelConfig::default(),
            shape: AeShape::default(),
        }
    }

    pub fn adversarial_default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            schedule_alpha: true,
            optimizer: AdamConfig {
                lr: 15e-4,
                beta1: 0.8,
                beta2: 0.8,
                eps: 1e-4,
                weight_decay: 1e-6,
            },
            ..Self::mmd_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        self.kernel.validate()?;
        self.optimizer.validate()
    }
}

/// `2 / (1 + e^(-10p)) - 1`, rising from 0 at `p = 0` toward 1.
pub fn alpha_schedule(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("training progress {p} outside [0, 1]")));
    }
    Ok(2.0 / (1.0 + (-10.0 * p).exp()) - 1.0)
}

fn mse(out: &Matrix, x: &Matrix) -> (f64, Matrix) {
    let n = x.data.len() as f64;
    let diff: Vec<f64> = out.data.iter().zip(&x.data).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let grad = Matrix {
        rows: x.rows,
        cols: x.cols,
        data: diff.iter().map(|d| 2.0 * d / n).collect(),
    };
    (loss, grad)
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// How the adversarial gradient is assembled. `encoder` scales the domain
/// loss gradient as it reaches the encoders, so `-alpha` is the reversal
/// layer and `alpha` the plain gradient of `L_R + alpha · L_D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrlWeights {
    pub recon: f64,
    pub head: f64,
    pub encoder: f64,
}

pub(crate) struct Evaluated {
    pub l_r: f64,
    pub l_d: f64,
    pub signature: u64,
}

fn check_input(model: &AlignModel, xs: &[&Matrix]) -> Result<()> {
    for x in xs {
        if x.is_empty() || x.cols != model.shape.input {
            return Err(Error::Shape(format!(
                "batch of {}×{} for a model with input dim {}",
                x.rows, x.cols, model.shape.input
            )));
        }
    }
    Ok(())
}

fn head_logits(model: &AlignModel, code: &Matrix) -> Result<Matrix> {
    let head = model.head.as_ref().ok_or_else(|| Error::Config("model has no domain head".into()))?;
    Ok(head.forward(&model.params, code))
}

pub(crate) fn adversarial_eval(model: &AlignModel, xr: &Matrix, xs: &Matrix) -> Result<Evaluated> {
    let (ar, as_) = (model.autoencoder(Domain::R), model.autoencoder(Domain::W));
    let (pr, ps) = (ar.forward(&model.params, xr), as_.forward(&model.params, xs));
    let l_r = mse(&pr.out, xr).0 + mse(&ps.out, xs).0;
    let (zr, zs) = (head_logits(model, &pr.code)?, head_logits(model, &ps.code)?);
    let l_d = zr.data.iter().map(|&z| softplus(-z)).sum::<f64>() / zr.rows as f64
        + zs.data.iter().map(|&z| softplus(z)).sum::<f64>() / zs.rows as f64;
    let signature = pr.signature() ^ ps.signature().rotate_left(1);
    Ok(Evaluated { l_r, l_d, signature })
}

/// Losses and gradient for one adversarial batch. `L_R` is the squared
/// reconstruction error of R through its autoencoder plus the synthetic
/// batch through the twin; `L_D` is the domain head's log-loss with R
/// labelled 1. The reconstruction and domain paths through the encoders are
/// back-propagated separately and then combined, so the reversal is an
/// exact scalar multiple.
pub fn adversarial_gradients(
    model: &AlignModel,
    xr: &Matrix,
    xs: &Matrix,
    w: GrlWeights,
) -> Result<(f64, f64, ParamSet)> {
    check_input(model, &[xr, xs])?;
    let head = model.head.ok_or_else(|| Error::Config("model has no domain head".into()))?;
    let p = &model.params;
    let (ar, as_) = (model.autoencoder(Domain::R), model.autoencoder(Domain::W));
    let (pr, ps): (Pass, Pass) = (ar.forward(p, xr), as_.forward(p, xs));
    let (lr_r, dout_r) = mse(&pr.out, xr);
    let (lr_s, dout_s) = mse(&ps.out, xs);
    let (zr, zs) = (head.forward(p, &pr.code), head.forward(p, &ps.code));
    let (nr, ns) = (zr.rows as f64, zs.rows as f64);
    let l_d = zr.data.iter().map(|&z| softplus(-z)).sum::<f64>() / nr + zs.data.iter().map(|&z| softplus(z)).sum::<f64>() / ns;
    let dzr = zr.map(|z| (sigmoid(z) - 1.0) / nr);
    let dzs = zs.map(|z| sigmoid(z) / ns);

    let mut grads = p.zeros_like();
    let scale = |m: &Matrix, s: f64| m.map(|v| v * s);
    let dc = ar.backward_decoder(p, &pr, &scale(&dout_r, w.recon), &mut grads);
    ar.backward_encoder(p, &pr, &dc, &mut grads);
    let dc = as_.backward_decoder(p, &ps, &scale(&dout_s, w.recon), &mut grads);
    as_.backward_encoder(p, &ps, &dc, &mut grads);

    let mut head_grads = p.zeros_like();
    let dcode_r = head.backward(p, &pr.code, &dzr, &mut head_grads);
    let dcode_s = head.backward(p, &ps.code, &dzs, &mut head_grads);
    grads.add_scaled(&head_grads, w.head);

    let mut domain = p.zeros_like();
    ar.backward_encoder(p, &pr, &dcode_r, &mut domain);
    as_.backward_encoder(p, &ps, &dcode_s, &mut domain);
    grads.add_scaled(&domain, w.encoder);
    Ok((lr_r + lr_s, l_d, grads))
}

/// One alternating adversarial update: the head descends on `L_D`, the
/// encoders receive `-alpha · ∂L_D` through the reversal point, and
/// everything descends on `L_R`. Losses are from before the update.
pub fn grl_train_step(
    xr: &Matrix,
    xs: &Matrix,
    model: &mut AlignModel,
    opt: &mut Adam,
    cfg: &AlignConfig,
    progress: f64,
) -> Result<LossReport> {
    let alpha = if cfg.schedule_alpha { alpha_schedule(progress)? } else { cfg.alpha };
    let (l_r, l_d, grads) = adversarial_gradients(
        model,
        xr,
        xs,
        GrlWeights {
            recon: 1.0,
            head: 1.0,
            encoder: -alpha,
        },
    )?;
    let report = LossReport::new(
        l_r,
        vec![LossTerm {
            name: "L_D".into(),
            weight: alpha,
            value: l_d,
        }],
    );
    report.check(opt.steps() as usize)?;
    if !grads.is_finite() {
        return Err(Error::Divergence {
            term: "gradient".into(),
            step: opt.steps() as usize,
        });
    }
    opt.step(&mut model.params, &grads);
    Ok(report)
}

/// A synthetic batch with its MMD weight and the name of its term.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticBatch<'a> {
    pub domain: Domain,
    pub x: &'a Matrix,
    pub weight: f64,
}

fn mmd_term_name(d: Domain) -> String {
    format!("L_D{d}")
}

/// Bandwidth parameters (`γ`) for each synthetic pairing at the current
/// encodings. They are treated as constants by the gradient.
pub fn mmd_gammas(model: &AlignModel, xr: &Matrix, synthetic: &[SyntheticBatch], k: &KernelConfig) -> Result<Vec<f64>> {
    let cr = model.encode(Domain::R, xr)?;
    synthetic
        .iter()
        .map(|s| Ok(k.gamma(&cr, &model.encode(s.domain, s.x)?)))
        .collect()
}

pub(crate) fn mmd_eval(model: &AlignModel, xr: &Matrix, synthetic: &[SyntheticBatch], gammas: &[f64]) -> Result<(LossReport, u64)> {
    let pr = model.autoencoder(Domain::R).forward(&model.params, xr);
    let mut l_r = mse(&pr.out, xr).0;
    let mut sig = pr.signature();
    let mut terms = Vec::new();
    for (i, (s, &g)) in synthetic.iter().zip(gammas).enumerate() {
        let ps = model.autoencoder(s.domain).forward(&model.params, s.x);
        l_r += mse(&ps.out, s.x).0;
        sig ^= ps.signature().rotate_left(i as u32 + 1);
        terms.push(LossTerm {
            name: mmd_term_name(s.domain),
            weight: s.weight,
            value: mmd_with_gamma(&pr.code, &ps.code, g),
        });
    }
    Ok((LossReport::new(l_r, terms), sig))
}

/// Losses and the gradient of `L_total` for per-domain autoencoders: each
/// domain reconstructs its own batch, and each synthetic code set is pulled
/// toward the R codes by MMD with the given fixed bandwidths.
pub fn mmd_gradients(
    model: &AlignModel,
    xr: &Matrix,
    synthetic: &[SyntheticBatch],
    gammas: &[f64],
) -> Result<(LossReport, ParamSet)> {
    let xs: Vec<&Matrix> = std::iter::once(xr).chain(synthetic.iter().map(|s| s.x)).collect();
    check_input(model, &xs)?;
    if gammas.len() != synthetic.len() {
        return Err(Error::Shape("one bandwidth per synthetic batch".into()));
    }
    let p = &model.params;
    let ar = model.autoencoder(Domain::R);
    let pr = ar.forward(p, xr);
    let mut grads = p.zeros_like();
    let (mut l_r, dout) = mse(&pr.out, xr);
    let mut dcode_r = ar.backward_decoder(p, &pr, &dout, &mut grads);
    let mut terms = Vec::new();
    for (s, &g) in synthetic.iter().zip(gammas) {
        let a = model.autoencoder(s.domain);
        let ps = a.forward(p, s.x);
        let (l, dout) = mse(&ps.out, s.x);
        l_r += l;
        let mut dcode_s = a.backward_decoder(p, &ps, &dout, &mut grads);
        let (value, dr, ds) = mmd_grad(&pr.code, &ps.code, g)?;
        for (a, b) in dcode_r.data.iter_mut().zip(&dr.data) {
            *a += s.weight * b;
        }
        for (a, b) in dcode_s.data.iter_mut().zip(&ds.data) {
            *a += s.weight * b;
        }
        a.backward_encoder(p, &ps, &dcode_s, &mut grads);
        terms.push(LossTerm {
            name: mmd_term_name(s.domain),
            weight: s.weight,
            value,
        });
    }
    ar.backward_encoder(p, &pr, &dcode_r, &mut grads);
    Ok((LossReport::new(l_r, terms), grads))
}

/// `L_total = L_R + alpha · L_DW + beta · L_DH`, one update. Either
/// synthetic batch may be absent, dropping its term.
pub fn mmd_align_train_step(
    xr: &Matrix,
    xw: Option<&Matrix>,
    xh: Option<&Matrix>,
    model: &mut AlignModel,
    opt: &mut Adam,
    cfg: &AlignConfig,
) -> Result<LossReport> {
    let mut synthetic = Vec::new();
    if let Some(x) = xw {
        synthetic.push(SyntheticBatch {
            domain: Domain::W,
            x,
            weight: cfg.alpha,
        });
    }
    if let Some(x) = xh {
        synthetic.push(SyntheticBatch {
            domain: Domain::H,
            x,
            weight: cfg.beta,
        });
    }
    let gammas = mmd_gammas(model, xr, &synthetic, &cfg.kernel)?;
    let (report, grads) = mmd_gradients(model, xr, &synthetic, &gammas)?;
    report.check(opt.steps() as usize)?;
    if !grads.is_finite() {
        return Err(Error::Divergence {
            term: "gradient".into(),
            step: opt.steps() as usize,
        });
    }
    opt.step(&mut model.params, &grads);
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a relu.
    pub skipped: usize,
}

/// Compares `analytic` against central differences of `f` for every
/// parameter. `f` returns the loss and an activation signature; a
/// parameter is skipped when either perturbation changes the signature.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(
    params: &ParamSet,
    analytic: &ParamSet,
    eps: f64,
    mut f: impl FnMut(&ParamSet) -> (f64, u64),
) -> GradCheck {
    let base_sig = f(params).1;
    let mut probe = params.clone();
    let mut out = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for k in 0..params.len() {
        let v = params.get_flat(k);
        probe.set_flat(k, v + eps);
        let (up, s1) = f(&probe);
        probe.set_flat(k, v - eps);
        let (down, s2) = f(&probe);
        probe.set_flat(k, v);
        if s1 != base_sig || s2 != base_sig {
            out.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * eps);
        let a = analytic.get_flat(k);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        out.max_rel_error = out.max_rel_error.max(rel);
        out.checked += 1;
    }
    out
}

/// Finite-difference check of the plain gradient of `L_R + alpha · L_D`.
pub fn grad_check_adversarial(model: &AlignModel, xr: &Matrix, xs: &Matrix, alpha: f64, eps: f64) -> Result<GradCheck> {
    let w = GrlWeights {
        recon: 1.0,
        head: alpha,
        encoder: alpha,
    };
    let (_, _, grads) = adversarial_gradients(model, xr, xs, w)?;
    let mut m = model.clone();
    Ok(grad_check(&model.params, &grads, eps, |p| {
        m.params.clone_from(p);
        let e = adversarial_eval(&m, xr, xs).expect("shapes checked");
        (e.l_r + alpha * e.l_d, e.signature)
    }))
}

/// Finite-difference check of the MMD objective at fixed bandwidths.
pub fn grad_check_mmd(model: &AlignModel, xr: &Matrix, synthetic: &[SyntheticBatch], k: &KernelConfig, eps: f64) -> Result<GradCheck> {
    let gammas = mmd_gammas(model, xr, synthetic, k)?;
    let (_, grads) = mmd_gradients(model, xr, synthetic, &gammas)?;
    let mut m = model.clone();
    Ok(grad_check(&model.params, &grads, eps, |p| {
        m.params.clone_from(p);
        let (r, sig) = mmd_eval(&m, xr, synthetic, &gammas).expect("shapes checked");
        (r.l_total, sig)
    }))
}

fn sample_batch(x: &Matrix, size: usize, r: &mut rng::StreamRng) -> Matrix {
    let mut idx: Vec<usize> = (0..x.rows).collect();
    idx.shuffle(r);
    idx.truncate(size.min(x.rows));
    x.select_rows(&idx)
}

/// Runs `steps` MMD alignment updates on random batches from each pool.
pub fn train_mmd_alignment(
    model: &mut AlignModel,
    xr: &Matrix,
    xw: Option<&Matrix>,
    xh: Option<&Matrix>,
    cfg: &AlignConfig,
    steps: usize,
    seed: u64,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    let mut opt = Adam::new(cfg.optimizer.clone(), &model.params);
    let mut r = rng::stream(seed, "mmd-batches", 0);
    let mut curve = Vec::with_capacity(steps);
    for _ in 0..steps {
        let br = sample_batch(xr, cfg.batch_size, &mut r);
        let bw = xw.map(|x| sample_batch(x, cfg.batch_size, &mut r));
        let bh = xh.map(|x| sample_batch(x, cfg.batch_size, &mut r));
        curve.push(mmd_align_train_step(&br, bw.as_ref(), bh.as_ref(), model, &mut opt, cfg)?);
    }
    Ok(curve)
}

/// Runs `steps` adversarial updates with progress `step / (steps - 1)`.
pub fn train_adversarial(
    model: &mut AlignModel,
    xr: &Matrix,
    xs: &Matrix,
    cfg: &AlignConfig,
    steps: usize,
    seed: u64,
) -> Result<Vec<LossReport>> {
    cfg.validate()?;
    let mut opt = Adam::new(cfg.optimizer.clone(), &model.params);
    let mut r = rng::stream(seed, "grl-batches", 0);
    let mut curve = Vec::with_capacity(steps);
    for step in 0..steps {
        let p = if steps > 1 { step as f64 / (steps - 1) as f64 } else { 1.0 };
        let br = sample_batch(xr, cfg.batch_size, &mut r);
        let bs = sample_batch(xs, cfg.batch_size, &mut r);
        curve.push(grl_train_step(&br, &bs, model, &mut opt, cfg, p)?);
    }
    Ok(curve)
}

/// One line per step: `step,L_R,<terms…>,L_total`.
pub fn write_loss_curve(path: &Path, curve: &[LossReport]) -> Result<()> {
    let names: Vec<&str> = curve.first().map(|r| r.l_d.iter().map(|t| t.name.as_str()).collect()).unwrap_or_default();
    let header = std::iter::once("step")
        .chain(std::iter::once("L_R"))
        .chain(names.iter().copied())
        .chain(std::iter::once("L_total"))
        .collect::<Vec<_>>()
        .join(",");
    write_lines(
        path,
        &header,
        curve.iter().enumerate().map(|(i, r)| {
            let mut cols = vec![i.to_string(), r.l_r.to_string()];
            cols.extend(r.l_d.iter().map(|t| t.value.to_string()));
            cols.push(r.l_total.to_string());
            cols.join(",")
        }),
    )
}
