use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Relation, RelationTriplet, SceneGraph, SceneNode, MAX_NODE_COUNT};
use super::library::{AssetLibrary, SizeClass};
use crate::error::{Error, Result};
use crate::rng;

fn default_count() -> [u32; 2] {
    [1, MAX_NODE_COUNT]
}

fn default_lateral() -> [f64; 2] {
    [-1.0, 1.0]
}

fn default_depth() -> [f64; 2] {
    [2.5, 6.0]
}

/// One entity slot of a template. `lateral` is a fraction of the maximum
/// placement angle (negative = left of the view axis) and `depth` a camera
/// distance range in meters; both only apply to nodes resting on the floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateNode {
    pub id: String,
    pub sizes: Vec<SizeClass>,
    #[serde(default)]
    pub categories: Vec<String>,
    #[serde(default = "default_count")]
    pub count: [u32; 2],
    #[serde(default = "default_lateral")]
    pub lateral: [f64; 2],
    #[serde(default = "default_depth")]
    pub depth: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTemplate {
    pub id: String,
    #[serde(default)]
    pub outdoor: bool,
    /// Keep each asset's own color and material instead of resampling.
    #[serde(default)]
    pub keep_defaults: bool,
    #[serde(rename = "node")]
    pub nodes: Vec<TemplateNode>,
    #[serde(default, rename = "relation")]
    pub relations: Vec<RelationTriplet>,
}

impl SceneTemplate {
    pub fn node(&self, id: &str) -> Option<&TemplateNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// The node that `node_id` rests on, if any.
    pub fn support_of(&self, node_id: &str) -> Option<&str> {
        self.relations.iter().find_map(|r| match r.relation {
            Relation::OnTopOf if r.subject == node_id => Some(r.object.as_str()),
            Relation::Under if r.object == node_id => Some(r.subject.as_str()),
            _ => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("template `{}`: {msg}", self.id)));
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return bad(format!("duplicate node `{}`", n.id));
            }
            if n.sizes.is_empty() {
                return bad(format!("node `{}` has no size classes", n.id));
            }
            let [lo, hi] = n.count;
            if lo < 1 || lo > hi || hi > MAX_NODE_COUNT {
                return bad(format!("node `{}` count range {lo}..={hi} invalid", n.id));
            }
            if n.lateral[0] > n.lateral[1] || n.lateral[0] < -1.0 || n.lateral[1] > 1.0 {
                return bad(format!("node `{}` lateral band invalid", n.id));
            }
            if !(n.depth[0] > 0.0 && n.depth[0] <= n.depth[1]) {
                return bad(format!("node `{}` depth band invalid", n.id));
            }
        }
        for r in &self.relations {
            let (Some(s), Some(o)) = (self.node(&r.subject), self.node(&r.object)) else {
                return bad(format!("relation {r:?} references an unknown node"));
            };
            let (top, base) = match r.relation {
                Relation::OnTopOf => (s, o),
                Relation::Under => (o, s),
                rel => {
                    if self.support_of(&s.id).is_some() || self.support_of(&o.id).is_some() {
                        return bad(format!("{} is only supported between floor nodes", rel.as_str()));
                    }
                    let (first, second, band) = match rel {
                        Relation::LeftOf => (s, o, "lateral"),
                        Relation::RightOf => (o, s, "lateral"),
                        Relation::InFrontOf => (s, o, "depth"),
                        _ => (o, s, "depth"),
                    };
                    let ordered = if band == "lateral" {
                        first.lateral[1] <= second.lateral[0]
                    } else {
                        first.depth[1] <= second.depth[0]
                    };
                    if !ordered {
                        return bad(format!(
                            "{band} bands of `{}` and `{}` contradict {}",
                            s.id,
                            o.id,
                            rel.as_str()
                        ));
                    }
                    continue;
                }
            };
            if top.sizes.iter().any(|c| !matches!(c, SizeClass::Tiny | SizeClass::Small)) {
                return bad(format!("only tiny and small nodes can rest on others (`{}`)", top.id));
            }
            if self.support_of(&base.id).is_some() {
                return bad(format!("support `{}` must stand on the floor", base.id));
            }
        }
        for n in &self.nodes {
            let supports = self
                .relations
                .iter()
                .filter(|r| {
                    (r.relation == Relation::OnTopOf && r.subject == n.id)
                        || (r.relation == Relation::Under && r.object == n.id)
                })
                .count();
            if supports > 1 {
                return bad(format!("node `{}` rests on more than one node", n.id));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    #[serde(rename = "template")]
    pub templates: Vec<SceneTemplate>,
}

const SHIPPED_TEMPLATES: &str = include_str!("../../assets/templates.toml");

impl TemplateSet {
    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_TEMPLATES, "templates.toml").expect("shipped templates are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let set: TemplateSet =
            toml::from_str(text).map_err(|e| Error::from_toml(source_name, text, e))?;
        let mut ids = BTreeSet::new();
        for t in &set.templates {
            if !ids.insert(t.id.as_str()) {
                return Err(Error::Validation(format!("duplicate template `{}`", t.id)));
            }
            t.validate()?;
        }
        Ok(set)
    }

    pub fn get(&self, id: &str) -> Result<&SceneTemplate> {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Lookup {
                kind: "template",
                name: id.to_string(),
            })
    }

    pub fn ids(&self) -> Vec<&str> {
        self.templates.iter().map(|t| t.id.as_str()).collect()
    }
}

/// Draws an attributed scene graph from `template_id`.
///
/// Each node gets a distinct asset whose size class and setting fit the
/// template, a count drawn uniformly from the node's range, and either a
/// random color and material or the asset defaults (`keep_defaults`).
pub fn sample_scene_graph(
    library: &AssetLibrary,
    templates: &TemplateSet,
    template_id: &str,
    seed: u64,
) -> Result<SceneGraph> {
    let template = templates.get(template_id)?;
    let mut rng = rng::keyed_stream(seed, "scene-graph", template_id);
    let mut used = BTreeSet::new();
    let mut nodes = Vec::with_capacity(template.nodes.len());

    for tn in &template.nodes {
        let eligible: Vec<_> = library
            .assets
            .iter()
            .filter(|a| tn.sizes.contains(&a.size_class))
            .filter(|a| a.setting.admits(template.outdoor))
            .filter(|a| tn.categories.is_empty() || tn.categories.contains(&a.category))
            .filter(|a| !used.contains(a.category.as_str()))
            .collect();
        let asset = *eligible.choose(&mut rng).ok_or_else(|| {
            Error::Validation(format!(
                "template `{template_id}` node `{}` has no eligible asset",
                tn.id
            ))
        })?;
        used.insert(asset.category.as_str());
        let count = rng.random_range(tn.count[0]..=tn.count[1]);
        let (color, material) = if template.keep_defaults {
            (asset.default_color.clone(), asset.default_material.clone())
        } else {
            let c = library.colors.choose(&mut rng).cloned();
            let m = library.materials.choose(&mut rng).map(|m| m.name.clone());
            (c.unwrap_or_else(|| asset.default_color.clone()), m.unwrap_or_else(|| asset.default_material.clone()))
        };
        nodes.push(SceneNode {
            node_id: tn.id.clone(),
            sizes: tn.sizes.clone(),
            asset_id: asset.asset_id.clone(),
            category: asset.category.clone(),
            count,
            color: Some(color),
            material: Some(material),
        });
    }

    let graph = SceneGraph {
        template_id: template_id.to_string(),
        nodes,
        relations: template.relations.clone(),
    };
    graph.validate()?;
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_templates_cover_required_shapes() {
        let set = TemplateSet::shipped();
        for id in [
            "table-with-small-objects",
            "two-large-neighbors",
            "chain-of-three",
            "outdoor-cluster",
        ] {
            set.get(id).unwrap();
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let lib = AssetLibrary::shipped();
        let set = TemplateSet::shipped();
        let a = sample_scene_graph(&lib, &set, "table-with-small-objects", 7).unwrap();
        let b = sample_scene_graph(&lib, &set, "table-with-small-objects", 7).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
        let c = sample_scene_graph(&lib, &set, "table-with-small-objects", 8).unwrap();
        assert_ne!(a.to_toml(), c.to_toml());
    }

    #[test]
    fn unknown_template_is_a_lookup_error() {
        let lib = AssetLibrary::shipped();
        let set = TemplateSet::shipped();
        let err = sample_scene_graph(&lib, &set, "nope", 1).unwrap_err();
        assert!(matches!(err, Error::Lookup { kind: "template", .. }));
    }

    #[test]
    fn on_top_nodes_are_tiny_or_small() {
        let lib = AssetLibrary::shipped();
        let set = TemplateSet::shipped();
        for id in set.ids() {
            for seed in 0..50 {
                let g = sample_scene_graph(&lib, &set, id, seed).unwrap();
                for r in g.relation_closure() {
                    if r.relation == Relation::OnTopOf {
                        let asset = lib.asset(&g.node(&r.subject).unwrap().asset_id).unwrap();
                        assert!(matches!(asset.size_class, SizeClass::Tiny | SizeClass::Small));
                    }
                }
            }
        }
    }

    #[test]
    fn keep_defaults_preserves_asset_attributes() {
        let lib = AssetLibrary::shipped();
        let set = TemplateSet::shipped();
        let t = set.templates.iter().find(|t| t.keep_defaults).expect("a keep_defaults template");
        for seed in 0..20 {
            let g = sample_scene_graph(&lib, &set, &t.id, seed).unwrap();
            for n in &g.nodes {
                let a = lib.asset(&n.asset_id).unwrap();
                assert_eq!(n.color.as_deref(), Some(a.default_color.as_str()));
                assert_eq!(n.material.as_deref(), Some(a.default_material.as_str()));
            }
        }
    }

    #[test]
    fn contradictory_bands_are_rejected() {
        let text = r#"
[[template]]
id = "bad"
[[template.node]]
id = "A"
sizes = ["large"]
lateral = [0.0, 1.0]
[[template.node]]
id = "B"
sizes = ["large"]
lateral = [-1.0, 0.0]
[[template.relation]]
subject = "A"
relation = "left-of"
object = "B"
"#;
        assert!(matches!(TemplateSet::from_toml_str(text, "bad"), Err(Error::Validation(_))));
    }
}
