use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::generate::QaGenerator;
use super::{QATriplet, QType};
use crate::compositor::VerificationReport;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng;
use crate::scene::SceneGraph;

/// Target number of triplets per question type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaMix {
    pub counting: usize,
    pub yesno: usize,
    pub color: usize,
    pub material: usize,
    pub position: usize,
}

impl QaMix {
    /// Full generated-scene recipe: 33,264 counting, 30,000 yes/no and
    /// 24,000 color/material questions (87,264 in total).
    pub const W_FULL: QaMix = QaMix {
        counting: 33_264,
        yesno: 30_000,
        color: 12_000,
        material: 12_000,
        position: 0,
    };

    /// The full recipe scaled down by 100.
    pub const W_DESK: QaMix = QaMix {
        counting: 333,
        yesno: 300,
        color: 120,
        material: 120,
        position: 0,
    };

    pub fn preset(name: &str) -> Result<QaMix> {
        match name {
            "w-full" => Ok(Self::W_FULL),
            "w-desk" => Ok(Self::W_DESK),
            _ => Err(Error::Lookup {
                kind: "qa preset",
                name: name.to_string(),
            }),
        }
    }

    pub fn get(&self, q: QType) -> usize {
        match q {
            QType::Counting => self.counting,
            QType::Yesno => self.yesno,
            QType::Color => self.color,
            QType::Material => self.material,
            QType::Position => self.position,
        }
    }

    pub fn total(&self) -> usize {
        QType::ALL.iter().map(|&q| self.get(q)).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SceneFacts<'a> {
    pub image_id: &'a str,
    pub graph: &'a SceneGraph,
    pub report: &'a VerificationReport,
}

/// Draws exactly `mix` triplets from `scenes`, cycling through the scenes so
/// each question type is spread as evenly as possible over images.
pub fn build_dataset(
    generator: &QaGenerator,
    scenes: &[SceneFacts],
    mix: &QaMix,
    seed: u64,
    exec: Exec,
) -> Result<Vec<QATriplet>> {
    let qtypes: Vec<QType> = QType::ALL.into_iter().filter(|&q| mix.get(q) > 0).collect();
    let per_scene = exec.try_map_range(scenes.len(), |i| {
        let s = &scenes[i];
        let s_seed = rng::derive_seed(seed, "qa-scene", i as u64);
        let mut by_type: BTreeMap<QType, Vec<QATriplet>> = BTreeMap::new();
        for t in generator.generate(s.image_id, s.graph, s.report, &qtypes, s_seed)? {
            by_type.entry(t.qtype).or_default().push(t);
        }
        Ok::<_, Error>(by_type)
    })?;

    let mut out = Vec::with_capacity(mix.total());
    for q in qtypes {
        let target = mix.get(q);
        let lists: Vec<&[QATriplet]> =
            per_scene.iter().map(|m| m.get(&q).map(Vec::as_slice).unwrap_or_default()).collect();
        let available: usize = lists.iter().map(|l| l.len()).sum();
        if available < target {
            return Err(Error::Capacity(format!(
                "{} scenes yield {available} {q} questions, {target} requested",
                scenes.len()
            )));
        }
        let mut taken = 0;
        'rounds: for round in 0.. {
            for l in &lists {
                if let Some(t) = l.get(round) {
                    out.push(t.clone());
                    taken += 1;
                    if taken == target {
                        break 'rounds;
                    }
                }
            }
        }
    }
    Ok(out)
}
