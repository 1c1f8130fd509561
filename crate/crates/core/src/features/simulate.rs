use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{FeatureRecord, Region};
use crate::compositor::PlacedScene;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng;

const EMBEDDING_SEED: u64 = 0x5eed_f00d_cafe_0001;

/// Fixed unit vector for an attribute value, shared by every domain.
pub fn embedding(kind: &str, value: &str, dim: usize) -> Vec<f64> {
    let mut r = rng::keyed_stream(EMBEDDING_SEED, kind, value);
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Affine map, noise and label corruption for one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainProfile {
    pub domain: Domain,
    pub dim: usize,
    /// Row-major `dim × dim`.
    pub matrix: Vec<f64>,
    pub offset: Vec<f64>,
    pub sigma: f64,
    pub rho: f64,
}

impl DomainProfile {
    pub fn identity(domain: Domain, dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self {
            domain,
            dim,
            matrix,
            offset: vec![0.0; dim],
            sigma: 0.0,
            rho: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.matrix.len() != self.dim * self.dim || self.offset.len() != self.dim {
            return Err(Error::Config(format!(
                "profile {}: dim {} with a {}-entry matrix and {}-entry offset",
                self.domain,
                self.dim,
                self.matrix.len(),
                self.offset.len()
            )));
        }
        if !(self.sigma >= 0.0) || !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("profile {}: sigma must be ≥ 0 and rho in [0, 1]", self.domain)));
        }
        if self.matrix.iter().chain(&self.offset).any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("profile {}: non-finite parameters", self.domain)));
        }
        Ok(())
    }

    fn apply(&self, base: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
                row.iter().zip(base).map(|(a, b)| a * b).sum::<f64>() + self.offset[i]
            })
            .collect()
    }
}

/// Compact profile description: `A = (1 - mix) I + mix R` with `R` a seeded
/// Gaussian matrix scaled by `1/sqrt(dim)`, and `b` a seeded direction of
/// length `offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileSpec {
    pub dim: usize,
    pub mix: f64,
    pub offset: f64,
    pub sigma: f64,
    pub rho: f64,
    pub seed: u64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        Self {
            dim: 64,
            mix: 0.0,
            offset: 0.0,
            sigma: 0.05,
            rho: 0.0,
            seed: 0,
        }
    }
}

impl ProfileSpec {
    pub fn build(&self, domain: Domain) -> Result<DomainProfile> {
        if self.dim == 0 || !(0.0..=1.0).contains(&self.mix) || !(self.offset >= 0.0) {
            return Err(Error::Config(format!("bad profile spec for {domain}: {self:?}")));
        }
        let mut p = DomainProfile::identity(domain, self.dim);
        let mut r = rng::stream(self.seed, "profile", domain as u64);
        let scale = 1.0 / (self.dim as f64).sqrt();
        for (i, a) in p.matrix.iter_mut().enumerate() {
            let g: f64 = StandardNormal.sample(&mut r);
            let eye = if i % (self.dim + 1) == 0 { 1.0 } else { 0.0 };
            *a = (1.0 - self.mix) * eye + self.mix * g * scale;
        }
        let dir: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut r)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        p.offset = dir.iter().map(|x| self.offset * x / norm).collect();
        p.sigma = self.sigma;
        p.rho = self.rho;
        p.validate()?;
        Ok(p)
    }
}

/// One region per object: the sum of the category, color, material and
/// size embeddings, mapped through the profile's affine transform plus
/// Gaussian noise. The pseudo-label is the category, replaced by another
/// entry of `categories` with probability `rho`.
pub fn simulate_features(
    scene: &PlacedScene,
    profile: &DomainProfile,
    categories: &[impl AsRef<str>],
    seed: u64,
) -> Result<FeatureRecord> {
    profile.validate()?;
    let mut r = rng::keyed_stream(seed, "simulate", &scene.scene_id);
    let dim = profile.dim;
    let mut regions = Vec::with_capacity(scene.objects.len());
    for o in &scene.objects {
        let mut base = vec![0.0; dim];
        for (kind, value) in [
            ("category", o.category.as_str()),
            ("color", o.color.as_str()),
            ("material", o.material.as_str()),
            ("size", o.size_class.as_str()),
        ] {
            for (b, e) in base.iter_mut().zip(embedding(kind, value, dim)) {
                *b += e;
            }
        }
        let mut f = profile.apply(&base);
        if profile.sigma > 0.0 {
            for x in &mut f {
                let n: f64 = StandardNormal.sample(&mut r);
                *x += profile.sigma * n;
            }
        }
        let mut label = o.category.clone();
        if profile.rho > 0.0 && r.random_bool(profile.rho) {
            let others: Vec<&str> = categories.iter().map(AsRef::as_ref).filter(|c| *c != o.category).collect();
            if let Some(c) = others.choose(&mut r) {
                label = c.to_string();
            }
        }
        let score = r.random_range(0.5f32..=1.0);
        regions.push(Region {
            feature: f.into_iter().map(|x| x as f32).collect(),
            pseudo_label: label,
            score,
        });
    }
    Ok(FeatureRecord {
        image_id: scene.scene_id.clone(),
        domain: profile.domain,
        regions,
    })
}
