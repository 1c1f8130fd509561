//! Region features with pseudo-labels: records and stores, label
//! dictionaries, feature swapping, padding, and a simulator that stands in
//! for a detector.

mod dict;
mod io;
mod simulate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use dict::{build_dictionary, fswap, FeatureDict, RegionRef, SwapConfig, SwapSource};
pub use io::{decode_record, encode_record, load_store, read_record, save_store, write_record, FORMAT_VERSION, MAGIC};
pub use simulate::{embedding, simulate_features, DomainProfile, ProfileSpec};

use crate::domain::Domain;
use crate::error::{Error, Result};

/// Default padded region count.
pub const DEFAULT_N_MAX: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub feature: Vec<f32>,
    pub pseudo_label: String,
    pub score: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub image_id: String,
    pub domain: Domain,
    pub regions: Vec<Region>,
}

impl FeatureRecord {
    pub fn dim(&self) -> usize {
        self.regions.first().map_or(0, |r| r.feature.len())
    }

    pub fn validate(&self, n_max: usize) -> Result<()> {
        let m = self.regions.len();
        if m == 0 {
            return Err(Error::Validation(format!("record {} has no regions", self.image_id)));
        }
        if m > n_max {
            return Err(Error::Truncation { count: m, n_max });
        }
        let dim = self.dim();
        if dim == 0 || self.regions.iter().any(|r| r.feature.len() != dim) {
            return Err(Error::Shape(format!("record {} mixes feature lengths", self.image_id)));
        }
        if let Some(r) = self.regions.iter().find(|r| !(0.0..=1.0).contains(&r.score)) {
            return Err(Error::Validation(format!(
                "record {}: score {} outside [0, 1]",
                self.image_id, r.score
            )));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.regions.iter().map(|r| r.pseudo_label.as_str()).collect()
    }
}

/// Records addressable by image id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureStore {
    records: Vec<FeatureRecord>,
    by_id: BTreeMap<String, usize>,
}

impl FeatureStore {
    pub fn new(records: Vec<FeatureRecord>) -> Result<Self> {
        let mut by_id = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.image_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate image id {}", r.image_id)));
            }
        }
        Ok(Self { records, by_id })
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&FeatureRecord> {
        self.by_id.get(image_id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn region_count(&self) -> usize {
        self.records.iter().map(|r| r.regions.len()).sum()
    }

    pub fn dim(&self) -> usize {
        self.records.first().map_or(0, FeatureRecord::dim)
    }

    /// Every region feature as an f64 row, record by record.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .flat_map(|r| r.regions.iter().map(|g| g.feature.iter().map(|&x| f64::from(x)).collect()))
            .collect()
    }
}

/// Row-major `n_max × dim` matrix with zero rows after the first `valid`.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedFeatures {
    pub data: Vec<f32>,
    pub n_max: usize,
    pub dim: usize,
    pub valid: usize,
}

impl PaddedFeatures {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn pad_features(record: &FeatureRecord, n_max: usize) -> Result<PaddedFeatures> {
    let m = record.regions.len();
    if m > n_max {
        return Err(Error::Truncation { count: m, n_max });
    }
    let dim = record.dim();
    let mut data = vec![0.0f32; n_max * dim];
    for (i, r) in record.regions.iter().enumerate() {
        if r.feature.len() != dim {
            return Err(Error::Shape(format!("region {i} of {} has the wrong length", record.image_id)));
        }
        data[i * dim..(i + 1) * dim].copy_from_slice(&r.feature);
    }
    Ok(PaddedFeatures {
        data,
        n_max,
        dim,
        valid: m,
    })
}

#[cfg(test)]
mod tests;
