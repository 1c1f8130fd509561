use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::render::{coverages, Coverage, FrameMasks};
use super::PlacedScene;
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub min_visible: f64,
    pub max_overlap: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            min_visible: 0.4,
            max_overlap: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairOverlap {
    pub a: u32,
    pub b: u32,
    pub iou: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Instances with enough visible area, per category.
    pub counts: BTreeMap<String, u32>,
    pub visible_fraction: BTreeMap<u32, f64>,
    /// IoU of unoccluded footprints for every pair that intersects.
    pub overlaps: Vec<PairOverlap>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn count(&self, category: &str) -> u32 {
        self.counts.get(category).copied().unwrap_or(0)
    }

    pub fn max_iou(&self) -> f64 {
        self.overlaps.iter().map(|o| o.iou).fold(0.0, f64::max)
    }
}

/// IoU of two sorted pixel lists.
pub fn footprint_iou(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

pub(crate) fn verify_with(
    masks: &FrameMasks,
    scene: &PlacedScene,
    covs: &[Coverage],
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    if masks.width != scene.render.width || masks.height != scene.render.height {
        return Err(Error::Consistency(format!(
            "mask is {}x{} but the scene renders at {}x{}",
            masks.width, masks.height, scene.render.width, scene.render.height
        )));
    }
    let n = (masks.width * masks.height) as usize;
    if masks.id_mask.len() != n || masks.category_mask.len() != n {
        return Err(Error::Consistency("mask buffers have the wrong length".into()));
    }
    let by_id: BTreeMap<u32, &super::PlacedObject> =
        scene.objects.iter().map(|o| (o.instance_id, o)).collect();
    for (&id, &cat) in masks.id_mask.iter().zip(&masks.category_mask) {
        if id == 0 {
            if cat != 0 {
                return Err(Error::Consistency("category without instance".into()));
            }
            continue;
        }
        let Some(obj) = by_id.get(&u32::from(id)) else {
            return Err(Error::Consistency(format!("unknown instance id {id} in mask")));
        };
        if obj.category_index != cat {
            return Err(Error::Consistency(format!("instance {id} has category {cat} in the mask")));
        }
    }
    if let Some(id) = masks.visible_fraction.keys().find(|id| !by_id.contains_key(id)) {
        return Err(Error::Consistency(format!("unknown instance id {id} in visible fractions")));
    }

    let mut counts = BTreeMap::new();
    let mut visible_fraction = BTreeMap::new();
    let mut pass = true;
    for obj in &scene.objects {
        let f = masks.visible_fraction.get(&obj.instance_id).copied().unwrap_or(0.0);
        visible_fraction.insert(obj.instance_id, f);
        if f >= cfg.min_visible {
            *counts.entry(obj.category.clone()).or_insert(0) += 1;
        } else {
            pass = false;
        }
    }
    let mut overlaps = Vec::new();
    for i in 0..scene.objects.len() {
        for j in i + 1..scene.objects.len() {
            let (a, b) = (&covs[i].pixels, &covs[j].pixels);
            let disjoint = match (a.first(), a.last(), b.first(), b.last()) {
                (Some(&a0), Some(&a1), Some(&b0), Some(&b1)) => a1 < b0 || b1 < a0,
                _ => true,
            };
            if disjoint {
                continue;
            }
            let iou = footprint_iou(a, b);
            if iou > 0.0 {
                pass &= iou <= cfg.max_overlap;
                overlaps.push(PairOverlap {
                    a: scene.objects[i].instance_id,
                    b: scene.objects[j].instance_id,
                    iou,
                });
            }
        }
    }
    Ok(VerificationReport {
        counts,
        visible_fraction,
        overlaps,
        pass,
    })
}

/// Counts sufficiently visible instances and checks pairwise overlap of
/// their unoccluded footprints.
pub fn verify_scene(
    masks: &FrameMasks,
    scene: &PlacedScene,
    min_visible: f64,
    max_overlap: f64,
) -> Result<VerificationReport> {
    scene.validate()?;
    let covs = coverages(scene, Exec::default());
    verify_with(masks, scene, &covs, &VerifyConfig { min_visible, max_overlap })
}
