use std::collections::BTreeMap;

use log::warn;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureRecord, FeatureStore};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionRef {
    pub image_id: String,
    pub region: usize,
}

/// Inverted index from pseudo-label to every region carrying it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDict {
    pub domain: Domain,
    pub entries: BTreeMap<String, Vec<RegionRef>>,
}

impl FeatureDict {
    pub fn get(&self, label: &str) -> &[RegionRef] {
        self.entries.get(label).map(Vec::as_slice).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Indexes the regions of every `domain` record in `store`.
pub fn build_dictionary(store: &FeatureStore, domain: Domain) -> FeatureDict {
    let mut entries: BTreeMap<String, Vec<RegionRef>> = BTreeMap::new();
    for rec in store.records().iter().filter(|r| r.domain == domain) {
        for (i, reg) in rec.regions.iter().enumerate() {
            entries.entry(reg.pseudo_label.clone()).or_default().push(RegionRef {
                image_id: rec.image_id.clone(),
                region: i,
            });
        }
    }
    if entries.is_empty() {
        warn!("no {domain} regions in the store; the dictionary is empty");
    }
    FeatureDict { domain, entries }
}

/// Union of dictionaries, each paired with the store its references point into.
#[derive(Clone, Debug, Default)]
pub struct SwapSource<'a> {
    parts: Vec<(&'a FeatureDict, &'a FeatureStore)>,
}

impl<'a> SwapSource<'a> {
    pub fn new(parts: Vec<(&'a FeatureDict, &'a FeatureStore)>) -> Result<Self> {
        for (d, s) in &parts {
            for refs in d.entries.values() {
                for r in refs {
                    let ok = s.get(&r.image_id).is_some_and(|rec| r.region < rec.regions.len());
                    if !ok {
                        return Err(Error::Consistency(format!(
                            "dictionary reference {}#{} does not resolve",
                            r.image_id, r.region
                        )));
                    }
                }
            }
        }
        Ok(Self { parts })
    }

    pub fn count(&self, label: &str) -> usize {
        self.parts.iter().map(|(d, _)| d.get(label).len()).sum()
    }

    /// The `i`-th feature carrying `label`, counting across parts in order.
    pub fn nth(&self, label: &str, mut i: usize) -> Option<&'a [f32]> {
        for (d, s) in &self.parts {
            let refs = d.get(label);
            if i < refs.len() {
                let r = &refs[i];
                return s.get(&r.image_id).map(|rec| rec.regions[r.region].feature.as_slice());
            }
            i -= refs.len();
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapConfig {
    pub lambda: f64,
    pub seed: u64,
    pub sources: Vec<Domain>,
}

impl Default for SwapConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            seed: 0,
            sources: vec![Domain::W],
        }
    }
}

impl SwapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.sources.contains(&Domain::R) {
            return Err(Error::Config("swap sources must be synthetic domains".into()));
        }
        Ok(())
    }

    /// Number of regions swapped in a record with `m` regions, `matched` of
    /// which have a label present in the source.
    pub fn swap_count(&self, m: usize, matched: usize) -> usize {
        // the epsilon keeps e.g. 0.2 * 10 from flooring to 1
        ((self.lambda * m as f64 + 1e-9).floor() as usize).min(matched)
    }
}

/// Replaces `floor(lambda * m)` region features (at most the number whose
/// label the source knows) by same-label features drawn uniformly from the
/// source. Labels, scores, order and all other regions are left alone.
pub fn fswap(record: &FeatureRecord, source: &SwapSource, cfg: &SwapConfig) -> FeatureRecord {
    let mut out = record.clone();
    let matched: Vec<usize> = (0..record.regions.len())
        .filter(|&i| source.count(&record.regions[i].pseudo_label) > 0)
        .collect();
    let k = cfg.swap_count(record.regions.len(), matched.len());
    if k == 0 {
        return out;
    }
    let mut rng = rng::keyed_stream(cfg.seed, "fswap", &record.image_id);
    let mut chosen: Vec<usize> = matched.choose_multiple(&mut rng, k).copied().collect();
    chosen.sort_unstable();
    for i in chosen {
        let label = &record.regions[i].pseudo_label;
        let j = rng.random_range(0..source.count(label));
        let feature = source.nth(label, j).expect("index within count");
        out.regions[i].feature = feature.to_vec();
    }
    out
}
