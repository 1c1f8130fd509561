use serde::{Deserialize, Serialize};

use super::matrix::{relu, relu_backward, Matrix};
use super::params::{Dense, ParamSet};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng::{self, fnv1a};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeShape {
    pub input: usize,
    pub hidden: usize,
    pub code: usize,
}

impl Default for AeShape {
    fn default() -> Self {
        Self {
            input: 64,
            hidden: 32,
            code: 32,
        }
    }
}

/// `x → relu(W1 x) → W2 · → code → relu(W3 ·) → W4 · → x̂`.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder {
    pub enc: [Dense; 2],
    pub dec: [Dense; 2],
}

/// Cached activations of one forward pass.
pub(crate) struct Pass {
    pub x: Matrix,
    pre_e: Matrix,
    h_e: Matrix,
    pub code: Matrix,
    pre_d: Matrix,
    h_d: Matrix,
    pub out: Matrix,
}

impl Pass {
    /// Hash of the relu on/off pattern; finite differences that change it
    /// straddle a kink.
    pub fn signature(&self) -> u64 {
        let bits: Vec<u8> = self.pre_e.data.iter().chain(&self.pre_d.data).map(|&v| u8::from(v > 0.0)).collect();
        fnv1a(&bits)
    }
}

impl Autoencoder {
    fn new(params: &mut ParamSet, prefix: &str, s: AeShape, r: &mut rng::StreamRng) -> Self {
        Self {
            enc: [
                Dense::new(params, &format!("{prefix}.enc0"), s.input, s.hidden, r),
                Dense::new(params, &format!("{prefix}.enc1"), s.hidden, s.code, r),
            ],
            dec: [
                Dense::new(params, &format!("{prefix}.dec0"), s.code, s.hidden, r),
                Dense::new(params, &format!("{prefix}.dec1"), s.hidden, s.input, r),
            ],
        }
    }

    pub fn encode(&self, params: &ParamSet, x: &Matrix) -> Matrix {
        let h = relu(&self.enc[0].forward(params, x));
        self.enc[1].forward(params, &h)
    }

    pub(crate) fn forward(&self, params: &ParamSet, x: &Matrix) -> Pass {
        let pre_e = self.enc[0].forward(params, x);
        let h_e = relu(&pre_e);
        let code = self.enc[1].forward(params, &h_e);
        let pre_d = self.dec[0].forward(params, &code);
        let h_d = relu(&pre_d);
        let out = self.dec[1].forward(params, &h_d);
        Pass {
            x: x.clone(),
            pre_e,
            h_e,
            code,
            pre_d,
            h_d,
            out,
        }
    }

    /// Backprop from the reconstruction to the code; returns `∂/∂code`.
    pub(crate) fn backward_decoder(&self, params: &ParamSet, p: &Pass, dout: &Matrix, grads: &mut ParamSet) -> Matrix {
        let dh = self.dec[1].backward(params, &p.h_d, dout, grads);
        let dpre = relu_backward(&p.pre_d, &dh);
        self.dec[0].backward(params, &p.code, &dpre, grads)
    }

    pub(crate) fn backward_encoder(&self, params: &ParamSet, p: &Pass, dcode: &Matrix, grads: &mut ParamSet) {
        let dh = self.enc[1].backward(params, &p.h_e, dcode, grads);
        let dpre = relu_backward(&p.pre_e, &dh);
        self.enc[0].backward(params, &p.x, &dpre, grads);
    }
}

/// Autoencoders keyed by domain plus an optional logistic domain head on the
/// code. The adversarial setup uses an R autoencoder and a synthetic twin
/// (stored under W, used for every synthetic domain); the MMD setup uses
/// one autoencoder per domain. All parameters live in one `ParamSet`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignModel {
    pub params: ParamSet,
    pub shape: AeShape,
    pub autoencoders: Vec<(Domain, Autoencoder)>,
    pub head: Option<Dense>,
}

impl AlignModel {
    /// Real autoencoder, synthetic twin (or a shared one when `twin` is
    /// false), and a domain head.
    pub fn adversarial(shape: AeShape, twin: bool, seed: u64) -> Self {
        let mut r = rng::stream(seed, "align-init", 0);
        let mut params = ParamSet::new();
        let mut autoencoders = vec![(Domain::R, Autoencoder::new(&mut params, "ae.R", shape, &mut r))];
        if twin {
            autoencoders.push((Domain::W, Autoencoder::new(&mut params, "ae.S", shape, &mut r)));
        }
        let head = Some(Dense::new(&mut params, "head", shape.code, 1, &mut r));
        Self {
            params,
            shape,
            autoencoders,
            head,
        }
    }

    pub fn per_domain(shape: AeShape, domains: &[Domain], seed: u64) -> Self {
        let mut r = rng::stream(seed, "align-init", 1);
        let mut params = ParamSet::new();
        let autoencoders = domains
            .iter()
            .map(|&d| (d, Autoencoder::new(&mut params, &format!("ae.{d}"), shape, &mut r)))
            .collect();
        Self {
            params,
            shape,
            autoencoders,
            head: None,
        }
    }

    /// The autoencoder for `domain`; synthetic domains without their own
    /// fall back to any synthetic one, then to the first.
    pub fn autoencoder(&self, domain: Domain) -> &Autoencoder {
        self.autoencoders
            .iter()
            .find(|(d, _)| *d == domain)
            .or_else(|| {
                (domain != Domain::R)
                    .then(|| self.autoencoders.iter().find(|(d, _)| *d != Domain::R))
                    .flatten()
            })
            .map(|(_, a)| a)
            .unwrap_or(&self.autoencoders[0].1)
    }

    pub fn has_own(&self, domain: Domain) -> bool {
        self.autoencoders.iter().any(|(d, _)| *d == domain)
    }

    pub fn encode(&self, domain: Domain, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.shape.input {
            return Err(Error::Shape(format!("model expects dim {}, got {}", self.shape.input, x.cols)));
        }
        Ok(self.autoencoder(domain).encode(&self.params, x))
    }
}
