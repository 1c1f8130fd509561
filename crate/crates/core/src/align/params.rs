use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{affine, affine_backward, Matrix};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Named flat tensors. Models hold indices into one of these so a single
/// optimizer and a single checkpoint cover every layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, values: Vec<f64>) -> usize {
        self.names.push(name.into());
        self.tensors.push(values);
        self.tensors.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensor(&self, i: usize) -> &[f64] {
        &self.tensors[i]
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.tensors[i].as_slice())
    }

    pub fn tensor_count(&self) -> usize {
        self.tensors.len()
    }

    /// Total scalar count.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.tensors.iter().flatten()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    /// `self += s · other`, element-wise.
    pub fn add_scaled(&mut self, other: &ParamSet, s: f64) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += s * b;
        }
    }

    pub fn get_flat(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn set_flat(&mut self, mut k: usize, v: f64) {
        for t in &mut self.tensors {
            if k < t.len() {
                t[k] = v;
                return;
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    /// Binary dump: `SVQC`, u16 version, u16 reserved, u32 tensor count, a
    /// directory of (u16 name length, name, u64 value offset, u32 value
    /// count), then all values as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SVQC");
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (n, t) in self.names.iter().zip(&self.tensors) {
            out.extend_from_slice(&(n.len() as u16).to_le_bytes());
            out.extend_from_slice(n.as_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            offset += t.len() as u64;
        }
        for x in self.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source_name: &str) -> Result<Self> {
        let bad = |m: &str| Error::format(source_name, 0, m.to_string());
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + n).ok_or_else(|| bad("truncated checkpoint"))?;
            at += n;
            Ok(s)
        };
        if take(4)? != b"SVQC" {
            return Err(bad("missing SVQC magic"));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().unwrap());
        if version != 1 {
            return Err(bad("unsupported checkpoint version"));
        }
        take(2)?;
        let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut dir = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u16::from_le_bytes(take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(take(len)?).map_err(|_| bad("tensor name is not UTF-8"))?.to_string();
            let offset = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
            let n = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            dir.push((name, offset, n));
        }
        let total: usize = dir.iter().map(|d| d.2).sum();
        let values: Vec<f64> = take(total * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if at != bytes.len() {
            return Err(bad("trailing bytes in checkpoint"));
        }
        let mut set = ParamSet::new();
        for (name, offset, n) in dir {
            let t = values.get(offset..offset + n).ok_or_else(|| bad("tensor offset out of range"))?;
            set.add(name, t.to_vec());
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }

    /// Overwrites values from `other`, which must have the same layout.
    pub fn assign(&mut self, other: &ParamSet) -> Result<()> {
        let same = self.names == other.names
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.len() == b.len());
        if !same {
            return Err(Error::Shape("checkpoint layout does not match the model".into()));
        }
        self.tensors.clone_from(&other.tensors);
        Ok(())
    }
}

/// Fully connected layer, weights stored `n_out × n_in`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    /// Uniform Glorot initialisation, zero bias.
    pub fn new(params: &mut ParamSet, name: &str, n_in: usize, n_out: usize, rng: &mut StreamRng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect();
        Self {
            w: params.add(format!("{name}.w"), w),
            b: params.add(format!("{name}.b"), vec![0.0; n_out]),
            n_in,
            n_out,
        }
    }

    pub fn forward(&self, params: &ParamSet, x: &Matrix) -> Matrix {
        affine(x, params.tensor(self.w), params.tensor(self.b))
    }

    pub fn backward(&self, params: &ParamSet, x: &Matrix, dy: &Matrix, grads: &mut ParamSet) -> Matrix {
        let mut gw = std::mem::take(&mut grads.tensors[self.w]);
        let dx = affine_backward(x, params.tensor(self.w), dy, &mut gw, grads.tensor_mut(self.b));
        grads.tensors[self.w] = gw;
        dx
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2: `weight_decay · θ` is added to the gradient.
    pub weight_decay: f64,
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad optimizer settings {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: ParamSet,
    v: ParamSet,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        Self {
            cfg,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &ParamSet) {
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(self.m.iter_mut()).zip(self.v.iter_mut()) {
            let g = g + weight_decay * *p;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
    }
}

pub(crate) fn write_lines(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    writeln!(f, "{header}").map_err(|e| Error::io(path, e))?;
    for l in lines {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
