//! Annotated-scene ingestion: per-instance categories and 3D boxes in, scene
//! graph plus counting, yes/no and position questions out. The JSON layout
//! is described in `docs/annotated_scene.schema.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::QaGenerator;
use super::{QATriplet, QType};
use crate::compositor::{PlacedScene, VerificationReport};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::geometry::{cluster_and_relate, ClusterConfig, Position};
use crate::scene::{assign_size_class, RelationTriplet, SceneGraph, SceneNode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedInstance {
    pub id: String,
    pub category: String,
    /// Box center, y up (m).
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    #[serde(default)]
    pub extents: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewInfo {
    /// Camera look direction in the ground plane, degrees from +x toward +z.
    pub yaw_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedScene {
    pub image_id: String,
    #[serde(default)]
    pub view: ViewInfo,
    pub instances: Vec<AnnotatedInstance>,
}

impl AnnotatedScene {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::format(&path.display().to_string(), e.line(), e.to_string()))
    }
}

/// Exports a placed scene in the annotated format.
pub fn export_annotated(scene: &PlacedScene) -> AnnotatedScene {
    AnnotatedScene {
        image_id: scene.scene_id.clone(),
        view: ViewInfo {
            yaw_deg: scene.camera.theta_c,
        },
        instances: scene
            .objects
            .iter()
            .map(|o| AnnotatedInstance {
                id: o.instance_id.to_string(),
                category: o.category.clone(),
                center: Some([o.position.x, o.position.y, o.position.z]),
                extents: Some(o.extents),
                color: Some(o.color.clone()),
                material: Some(o.material.clone()),
            })
            .collect(),
    }
}

fn shared<'a>(values: impl Iterator<Item = Option<&'a String>>) -> Option<String> {
    let set: BTreeSet<Option<&String>> = values.collect();
    match set.into_iter().collect::<Vec<_>>()[..] {
        [Some(v)] => Some(v.clone()),
        _ => None,
    }
}

/// Builds a scene graph from annotated instances and emits counting, yes/no
/// and position triplets tagged with domain H.
///
/// Relations come from clustering instance centers. Only pairs whose two
/// categories each occur once are lifted to the graph, so every position
/// phrase refers to one object.
pub fn ingest_annotated_scene(
    meta: &AnnotatedScene,
    generator: &QaGenerator,
    cluster: &ClusterConfig,
    seed: u64,
) -> Result<(SceneGraph, Vec<QATriplet>)> {
    let missing: Vec<String> = meta.instances.iter().filter(|i| i.center.is_none()).map(|i| i.id.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::Ingestion(missing));
    }
    if let Some(i) = meta.instances.iter().find(|i| !generator.grammar.has_noun(&i.category)) {
        return Err(Error::Lookup {
            kind: "category",
            name: i.category.clone(),
        });
    }

    let mut by_category: BTreeMap<&str, Vec<&AnnotatedInstance>> = BTreeMap::new();
    let mut order = Vec::new();
    for inst in &meta.instances {
        let e = by_category.entry(inst.category.as_str()).or_default();
        if e.is_empty() {
            order.push(inst.category.as_str());
        }
        e.push(inst);
    }
    let mut nodes = Vec::new();
    for cat in &order {
        let members = &by_category[cat];
        let mut sizes = BTreeSet::new();
        for m in members {
            if let Some(e) = m.extents {
                sizes.insert(assign_size_class(e[0] * e[1] * e[2])?);
            }
        }
        nodes.push(SceneNode {
            node_id: cat.to_string(),
            sizes: sizes.into_iter().collect(),
            asset_id: cat.to_string(),
            category: cat.to_string(),
            count: members.len() as u32,
            color: shared(members.iter().map(|m| m.color.as_ref())),
            material: shared(members.iter().map(|m| m.material.as_ref())),
        });
    }

    let points: Vec<(u32, Position)> = meta
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let c = inst.center.expect("checked above");
            (i as u32, Position::new(c[0], c[1], c[2]))
        })
        .collect();
    let mut relations = BTreeSet::new();
    for (a, rel, b) in cluster_and_relate(&points, meta.view.yaw_deg, cluster) {
        let (ca, cb) = (&meta.instances[a as usize].category, &meta.instances[b as usize].category);
        if ca != cb && by_category[ca.as_str()].len() == 1 && by_category[cb.as_str()].len() == 1 {
            relations.insert(RelationTriplet::new(ca.clone(), rel, cb.clone()));
        }
    }
    let graph = SceneGraph {
        template_id: "annotated".into(),
        nodes,
        relations: relations.into_iter().collect(),
    };
    graph.validate()?;

    let report = VerificationReport {
        counts: graph.nodes.iter().map(|n| (n.category.clone(), n.count)).collect(),
        visible_fraction: BTreeMap::new(),
        overlaps: Vec::new(),
        pass: true,
    };
    let gen = QaGenerator::new(generator.grammar.clone(), Domain::H);
    let triplets = gen.generate(
        &meta.image_id,
        &graph,
        &report,
        &[QType::Counting, QType::Yesno, QType::Position],
        seed,
    )?;
    Ok((graph, triplets))
}
