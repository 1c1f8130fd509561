//! Asset library, scene-graph templates and attributed scene-graph sampling.

mod graph;
mod library;
mod template;

pub use graph::{Relation, RelationTriplet, SceneGraph, SceneNode, MAX_NODE_COUNT};
pub use library::{
    assign_size_class, AssetLibrary, Material, ObjectAsset, SceneBackdrop, Setting, SizeClass,
    SizeThresholds,
};
pub use template::{sample_scene_graph, SceneTemplate, TemplateNode, TemplateSet};
