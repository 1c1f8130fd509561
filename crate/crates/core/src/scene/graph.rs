use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::library::SizeClass;
use crate::error::{Error, Result};

/// Maximum number of instances a single node may request.
pub const MAX_NODE_COUNT: u32 = 20;

/// Spatial relation between two scene entities, read as
/// `(subject, relation, object)`: "subject is <relation> object".
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    LeftOf,
    RightOf,
    OnTopOf,
    Under,
    InFrontOf,
    Behind,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::LeftOf,
        Relation::RightOf,
        Relation::OnTopOf,
        Relation::Under,
        Relation::InFrontOf,
        Relation::Behind,
    ];

    pub fn inverse(self) -> Relation {
        match self {
            Relation::LeftOf => Relation::RightOf,
            Relation::RightOf => Relation::LeftOf,
            Relation::OnTopOf => Relation::Under,
            Relation::Under => Relation::OnTopOf,
            Relation::InFrontOf => Relation::Behind,
            Relation::Behind => Relation::InFrontOf,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::LeftOf => "left-of",
            Relation::RightOf => "right-of",
            Relation::OnTopOf => "on-top-of",
            Relation::Under => "under",
            Relation::InFrontOf => "in-front-of",
            Relation::Behind => "behind",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationTriplet {
    pub subject: String,
    pub relation: Relation,
    pub object: String,
}

impl RelationTriplet {
    pub fn new(subject: impl Into<String>, relation: Relation, object: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            relation,
            object: object.into(),
        }
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.object.clone(), self.relation.inverse(), self.subject.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub node_id: String,
    /// Size classes this node may be instantiated with.
    pub sizes: Vec<SizeClass>,
    pub asset_id: String,
    pub category: String,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub template_id: String,
    pub nodes: Vec<SceneNode>,
    #[serde(default)]
    pub relations: Vec<RelationTriplet>,
}

impl SceneGraph {
    pub fn node(&self, node_id: &str) -> Option<&SceneNode> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    pub fn node_by_category(&self, category: &str) -> Option<&SceneNode> {
        self.nodes.iter().find(|n| n.category == category)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.node_id.as_str()) {
                return Err(Error::Validation(format!("duplicate node `{}`", n.node_id)));
            }
            if !(1..=MAX_NODE_COUNT).contains(&n.count) {
                return Err(Error::Validation(format!(
                    "node `{}` count {} outside [1, {MAX_NODE_COUNT}]",
                    n.node_id, n.count
                )));
            }
        }
        for r in &self.relations {
            for end in [&r.subject, &r.object] {
                if !ids.contains(end.as_str()) {
                    return Err(Error::Validation(format!(
                        "relation references unknown node `{end}`"
                    )));
                }
            }
            if r.subject == r.object {
                return Err(Error::Validation(format!("self relation on `{}`", r.subject)));
            }
        }
        Ok(())
    }

    /// Stated relations plus every inverse, sorted and deduplicated.
    pub fn relation_closure(&self) -> Vec<RelationTriplet> {
        let set: BTreeSet<RelationTriplet> = self
            .relations
            .iter()
            .flat_map(|r| [r.clone(), r.inverse()])
            .collect();
        set.into_iter().collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene graph serializes")
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let g: SceneGraph =
            toml::from_str(text).map_err(|e| Error::from_toml(source_name, text, e))?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_is_an_involution() {
        for r in Relation::ALL {
            assert_eq!(r.inverse().inverse(), r);
            assert_ne!(r.inverse(), r);
        }
    }

    #[test]
    fn closure_contains_inverses() {
        let g = SceneGraph {
            template_id: "t".into(),
            nodes: ["A", "B"]
                .iter()
                .map(|id| SceneNode {
                    node_id: id.to_string(),
                    sizes: vec![SizeClass::Small],
                    asset_id: format!("{id}_asset"),
                    category: id.to_lowercase(),
                    count: 1,
                    color: None,
                    material: None,
                })
                .collect(),
            relations: vec![RelationTriplet::new("A", Relation::OnTopOf, "B")],
        };
        g.validate().unwrap();
        let c = g.relation_closure();
        assert_eq!(c.len(), 2);
        assert!(c.contains(&RelationTriplet::new("B", Relation::Under, "A")));
    }

    #[test]
    fn rejects_dangling_relation() {
        let g = SceneGraph {
            template_id: "t".into(),
            nodes: vec![],
            relations: vec![RelationTriplet::new("A", Relation::LeftOf, "B")],
        };
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }
}
