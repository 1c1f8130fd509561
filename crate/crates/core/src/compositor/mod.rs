//! Deterministic stand-in renderer: lays out a sampled scene graph in front
//! of a camera, rasterizes id and category masks from the object boxes, and
//! verifies counts and occlusion.

mod camera;
mod generate;
mod io;
mod layout;
mod render;
mod verify;

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use camera::{CameraView, PixelRect, Projection, RenderConfig, ScreenBounds};
pub use generate::{generate_scene, GeneratedScene, SceneContext};
pub use io::{decode_pgm, encode_pgm, read_masks, write_masks, MaskSidecar};
pub use layout::{layout_scene, LayoutConfig};
pub use render::{render_masks, render_masks_with, Coverage, FrameMasks};
pub use verify::{footprint_iou, verify_scene, PairOverlap, VerificationReport, VerifyConfig};

use crate::error::{Error, Result};
use crate::geometry::{CameraConfig, Position, Support};
use crate::scene::SizeClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub instance_id: u32,
    /// Scene-graph node this instance realizes.
    pub node_id: String,
    pub asset_id: String,
    pub category: String,
    /// 1-based index of `category` in the library's sorted category list.
    pub category_index: u16,
    pub color: String,
    pub material: String,
    pub size_class: SizeClass,
    pub position: Position,
    pub extents: [f64; 3],
    /// Instance this object rests on, if not the floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<u32>,
}

impl PlacedObject {
    pub fn top(&self) -> Support {
        Support::top_of(self.position, self.extents)
    }

    pub fn bottom(&self) -> f64 {
        self.position.y - self.extents[1] / 2.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedScene {
    pub scene_id: String,
    pub template_id: String,
    pub backdrop_id: String,
    pub camera: CameraConfig,
    pub render: RenderConfig,
    pub objects: Vec<PlacedObject>,
}

impl PlacedScene {
    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        let ids: BTreeSet<u32> = self.objects.iter().map(|o| o.instance_id).collect();
        let dense = ids.len() == self.objects.len()
            && ids.iter().copied().eq(1..=self.objects.len() as u32);
        if !dense {
            return Err(Error::Validation(format!(
                "scene {}: instance ids must be unique and dense from 1",
                self.scene_id
            )));
        }
        for o in &self.objects {
            if !o.position.is_finite() || o.extents.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
                return Err(Error::Validation(format!(
                    "scene {}: instance {} has a non-finite position or bad extents",
                    self.scene_id, o.instance_id
                )));
            }
            if o.category_index == 0 {
                return Err(Error::Validation(format!(
                    "scene {}: instance {} has category index 0",
                    self.scene_id, o.instance_id
                )));
            }
        }
        Ok(())
    }

    pub fn object(&self, instance_id: u32) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.instance_id == instance_id)
    }

    /// The floor plus the top face of every object except `skip`.
    pub fn supports_excluding(&self, skip: u32) -> Vec<Support> {
        std::iter::once(Support::floor(self.camera.y_0))
            .chain(self.objects.iter().filter(|o| o.instance_id != skip).map(PlacedObject::top))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("placed scene serializes")
    }

    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let s: PlacedScene = toml::from_str(text).map_err(|e| Error::from_toml(source_name, text, e))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, &path.display().to_string())
    }
}
