use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::answers::AnswerSpace;
use crate::align::{Dense, Matrix, ParamSet};
use crate::error::{Error, Result};
use crate::features::FeatureRecord;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub n_max: usize,
}

/// Bag-of-words question encoder, a region projection, one fusion layer
/// applied to every (question, region) pair, mean-pooling over the padded
/// region slots, and a softmax answer head:
///
/// ```text
/// q   = mean(embed[w] for w in question)
/// r_i = P f_i + p
/// h_i = relu(F · [r_i ⊙ q, q] + f)
/// v   = (1 / n_max) Σ_i h_i          (padding slots contribute nothing)
/// logits = A · v + a
/// ```
///
/// Dividing by the constant `n_max` rather than the region count keeps
/// object counts recoverable from `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub params: ParamSet,
    pub shape: ModelShape,
    pub vocab: BTreeMap<String, usize>,
    pub answers: AnswerSpace,
    embed: usize,
    proj: Dense,
    fuse: Dense,
    head: Dense,
}

/// A batch: distinct region matrices, and questions as (record index,
/// word ids).
#[derive(Clone, Debug, Default)]
pub struct Batch<'a> {
    pub records: Vec<&'a Matrix>,
    pub items: Vec<(usize, &'a [usize])>,
}

pub fn tokenize(question: &str) -> Vec<String> {
    question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Region features as an f64 matrix, checked against `n_max`.
pub fn region_matrix(record: &FeatureRecord, n_max: usize) -> Result<Matrix> {
    let m = record.regions.len();
    if m > n_max {
        return Err(Error::Truncation { count: m, n_max });
    }
    Matrix::from_f32_rows(record.regions.iter().map(|r| r.feature.as_slice()))
        .map_err(|_| Error::Shape(format!("record {} mixes feature lengths", record.image_id)))
}

pub(crate) struct Pass {
    /// Projected regions, one matrix per record.
    r: Vec<Matrix>,
    q: Matrix,
    /// Fusion inputs and pre-activations, one row per (question, region).
    u: Matrix,
    pre: Matrix,
    v: Matrix,
    pub logits: Matrix,
}

impl ToyModel {
    pub fn new(shape: ModelShape, words: impl IntoIterator<Item = String>, answers: AnswerSpace, seed: u64) -> Self {
        let mut vocab = BTreeMap::new();
        for w in words {
            let n = vocab.len();
            vocab.entry(w).or_insert(n);
        }
        let mut r = rng::stream(seed, "toy-init", 0);
        let mut params = ParamSet::new();
        let table = (0..vocab.len() * shape.embed_dim).map(|_| r.random_range(-0.5..0.5)).collect();
        let embed = params.add("embed", table);
        let proj = Dense::new(&mut params, "proj", shape.feature_dim, shape.embed_dim, &mut r);
        let fuse = Dense::new(&mut params, "fuse", 2 * shape.embed_dim, shape.hidden, &mut r);
        let head = Dense::new(&mut params, "head", shape.hidden, answers.len(), &mut r);
        Self {
            params,
            shape,
            vocab,
            answers,
            embed,
            proj,
            fuse,
            head,
        }
    }

    pub fn words(&self, question: &str) -> Vec<usize> {
        tokenize(question).iter().filter_map(|w| self.vocab.get(w).copied()).collect()
    }

    fn check(&self, batch: &Batch) -> Result<()> {
        if let Some(m) = batch.records.iter().find(|m| !m.is_empty() && m.cols != self.shape.feature_dim) {
            return Err(Error::Shape(format!("model takes {}-dim features, got {}", self.shape.feature_dim, m.cols)));
        }
        if let Some(m) = batch.records.iter().find(|m| m.rows > self.shape.n_max) {
            return Err(Error::Truncation {
                count: m.rows,
                n_max: self.shape.n_max,
            });
        }
        if let Some(&(rec, _)) = batch.items.iter().find(|(rec, _)| *rec >= batch.records.len()) {
            return Err(Error::Shape(format!("question refers to record {rec} of {}", batch.records.len())));
        }
        Ok(())
    }

    pub(crate) fn forward(&self, batch: &Batch) -> Pass {
        let (d, n) = (self.shape.embed_dim, batch.items.len());
        let r: Vec<Matrix> = batch
            .records
            .iter()
            .map(|m| if m.is_empty() { Matrix::zeros(0, d) } else { self.proj.forward(&self.params, m) })
            .collect();
        let table = self.params.tensor(self.embed);
        let mut q = Matrix::zeros(n, d);
        for (i, &(_, words)) in batch.items.iter().enumerate() {
            let qr = q.row_mut(i);
            for &w in words {
                for (a, b) in qr.iter_mut().zip(&table[w * d..(w + 1) * d]) {
                    *a += b;
                }
            }
            if !words.is_empty() {
                let k = words.len() as f64;
                qr.iter_mut().for_each(|a| *a /= k);
            }
        }
        let rows: usize = batch.items.iter().map(|&(rec, _)| r[rec].rows).sum();
        let mut u = Matrix::zeros(rows, 2 * d);
        let mut at = 0;
        for (i, &(rec, _)) in batch.items.iter().enumerate() {
            let qr = q.row(i);
            for k in 0..r[rec].rows {
                let rr = r[rec].row(k);
                let ur = u.row_mut(at);
                for j in 0..d {
                    ur[j] = rr[j] * qr[j];
                    ur[d + j] = qr[j];
                }
                at += 1;
            }
        }
        let pre = self.fuse.forward(&self.params, &u);
        let scale = 1.0 / self.shape.n_max as f64;
        let mut v = Matrix::zeros(n, self.shape.hidden);
        let mut at = 0;
        for (i, &(rec, _)) in batch.items.iter().enumerate() {
            let vr = v.row_mut(i);
            for _ in 0..r[rec].rows {
                for (a, &b) in vr.iter_mut().zip(pre.row(at)) {
                    *a += b.max(0.0) * scale;
                }
                at += 1;
            }
        }
        let logits = self.head.forward(&self.params, &v);
        Pass { r, q, u, pre, v, logits }
    }

    pub fn logits(&self, batch: &Batch) -> Result<Matrix> {
        self.check(batch)?;
        Ok(self.forward(batch).logits)
    }

    fn cross_entropy(z: &[f64], target: usize) -> f64 {
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() - z[target]
    }

    pub fn loss(&self, batch: &Batch, targets: &[usize]) -> Result<f64> {
        let z = self.logits(batch)?;
        Ok((0..z.rows).map(|i| Self::cross_entropy(z.row(i), targets[i])).sum::<f64>() / z.rows as f64)
    }

    /// Mean cross-entropy over the batch and its gradient.
    pub fn loss_and_grads(&self, batch: &Batch, targets: &[usize]) -> Result<(f64, ParamSet)> {
        self.check(batch)?;
        if targets.len() != batch.items.len() {
            return Err(Error::Shape(format!("{} targets for {} questions", targets.len(), batch.items.len())));
        }
        let p = self.forward(batch);
        let (n, c, d, hd) = (batch.items.len(), self.answers.len(), self.shape.embed_dim, self.shape.hidden);
        let mut dz = Matrix::zeros(n, c);
        let mut loss = 0.0;
        for i in 0..n {
            let z = p.logits.row(i);
            loss += Self::cross_entropy(z, targets[i]);
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|&x| (x - max).exp()).sum();
            let g = dz.row_mut(i);
            for (k, gk) in g.iter_mut().enumerate() {
                *gk = (z[k] - max).exp() / sum / n as f64;
            }
            g[targets[i]] -= 1.0 / n as f64;
        }
        loss /= n as f64;

        let mut grads = self.params.zeros_like();
        let dv = self.head.backward(&self.params, &p.v, &dz, &mut grads);
        let scale = 1.0 / self.shape.n_max as f64;
        let mut dpre = Matrix::zeros(p.pre.rows, hd);
        let mut at = 0;
        for (i, &(rec, _)) in batch.items.iter().enumerate() {
            for _ in 0..p.r[rec].rows {
                for j in 0..hd {
                    if p.pre.data[at * hd + j] > 0.0 {
                        dpre.data[at * hd + j] = dv.data[i * hd + j] * scale;
                    }
                }
                at += 1;
            }
        }
        let du = self.fuse.backward(&self.params, &p.u, &dpre, &mut grads);
        let mut dr: Vec<Matrix> = p.r.iter().map(|m| Matrix::zeros(m.rows, d)).collect();
        let mut dq = Matrix::zeros(n, d);
        let mut at = 0;
        for (i, &(rec, _)) in batch.items.iter().enumerate() {
            let qr = p.q.row(i);
            for k in 0..p.r[rec].rows {
                let (dur, rr) = (du.row(at), p.r[rec].row(k));
                let drr = dr[rec].row_mut(k);
                for j in 0..d {
                    drr[j] += dur[j] * qr[j];
                    dq.data[i * d + j] += dur[j] * rr[j] + dur[d + j];
                }
                at += 1;
            }
        }
        for (m, g) in batch.records.iter().zip(&dr) {
            if !m.is_empty() {
                self.proj.backward(&self.params, m, g, &mut grads);
            }
        }
        let ge = grads.tensor_mut(self.embed);
        for (i, &(_, words)) in batch.items.iter().enumerate() {
            if words.is_empty() {
                continue;
            }
            let k = words.len() as f64;
            for &w in words {
                for j in 0..d {
                    ge[w * d + j] += dq.data[i * d + j] / k;
                }
            }
        }
        Ok((loss, grads))
    }

    /// Relu on/off pattern hash for gradient checks.
    #[cfg(test)]
    pub(crate) fn signature(&self, batch: &Batch) -> u64 {
        let bits: Vec<u8> = self.forward(batch).pre.data.iter().map(|&v| u8::from(v > 0.0)).collect();
        rng::fnv1a(&bits)
    }
}
