use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::camera::{CameraView, Projection, RenderConfig};
use super::PlacedScene;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Per-pixel instance and category masks for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMasks {
    pub width: u32,
    pub height: u32,
    /// Row-major instance ids, 0 = background.
    pub id_mask: Vec<u16>,
    /// Row-major 1-based category indices, 0 = background.
    pub category_mask: Vec<u16>,
    /// Visible pixels divided by unoccluded pixels, per instance.
    pub visible_fraction: BTreeMap<u32, f64>,
    /// Instances entirely behind the camera, left out of the frame.
    pub excluded: Vec<u32>,
}

impl FrameMasks {
    pub fn pixel(&self, x: u32, y: u32) -> (u16, u16) {
        let i = (y * self.width + x) as usize;
        (self.id_mask[i], self.category_mask[i])
    }

    /// Visible pixel count per instance id, by direct scan of the id mask.
    pub fn visible_pixels(&self) -> BTreeMap<u32, u64> {
        let mut out = BTreeMap::new();
        for &id in self.id_mask.iter().filter(|&&id| id != 0) {
            *out.entry(u32::from(id)).or_insert(0) += 1;
        }
        out
    }
}

/// Pixels an object would cover with nothing else in the scene.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Coverage {
    /// Sorted row-major pixel indices.
    pub pixels: Vec<u32>,
    pub depths: Vec<f64>,
    pub behind_camera: bool,
}

pub(crate) fn rasterize(view: &CameraView, obj: &super::PlacedObject) -> Coverage {
    let rect = match view.project_box(obj.position, obj.extents) {
        Projection::Behind => {
            return Coverage {
                behind_camera: true,
                ..Coverage::default()
            }
        }
        Projection::Straddling => super::camera::PixelRect {
            x0: 0,
            y0: 0,
            x1: view.width,
            y1: view.height,
        },
        Projection::Bounded(b) => match view.clip(&b) {
            Some(r) => r,
            None => return Coverage::default(),
        },
    };
    let h = [obj.extents[0] / 2.0, obj.extents[1] / 2.0, obj.extents[2] / 2.0];
    let p = obj.position;
    let lo = [p.x - h[0], p.y - h[1], p.z - h[2]];
    let hi = [p.x + h[0], p.y + h[1], p.z + h[2]];
    let mut cov = Coverage::default();
    for y in rect.y0..rect.y1 {
        for x in rect.x0..rect.x1 {
            if let Some(d) = view.hit_depth(x, y, lo, hi) {
                cov.pixels.push(y * view.width + x);
                cov.depths.push(d);
            }
        }
    }
    cov
}

pub(crate) fn coverages(scene: &PlacedScene, exec: Exec) -> Vec<Coverage> {
    let view = CameraView::new(&scene.camera, &scene.render);
    exec.map(&scene.objects, |_, o| rasterize(&view, o))
}

pub(crate) fn compose(scene: &PlacedScene, covs: &[Coverage]) -> Result<FrameMasks> {
    let RenderConfig { width, height, .. } = scene.render;
    let n = (width * height) as usize;
    let mut depth = vec![f64::INFINITY; n];
    let mut id_mask = vec![0u16; n];
    let mut category_mask = vec![0u16; n];

    // objects are in instance-id order, and only a strictly nearer hit
    // replaces a pixel, so equal depths resolve to the lower id
    for (obj, cov) in scene.objects.iter().zip(covs) {
        let id = u16::try_from(obj.instance_id)
            .map_err(|_| Error::Capacity(format!("instance id {} exceeds 16-bit masks", obj.instance_id)))?;
        for (&px, &d) in cov.pixels.iter().zip(&cov.depths) {
            let i = px as usize;
            if d < depth[i] {
                depth[i] = d;
                id_mask[i] = id;
                category_mask[i] = obj.category_index;
            }
        }
    }

    let mut visible = BTreeMap::new();
    for &id in id_mask.iter().filter(|&&id| id != 0) {
        *visible.entry(u32::from(id)).or_insert(0u64) += 1;
    }
    let mut visible_fraction = BTreeMap::new();
    let mut excluded = Vec::new();
    for (obj, cov) in scene.objects.iter().zip(covs) {
        if cov.behind_camera {
            excluded.push(obj.instance_id);
        }
        let total = cov.pixels.len() as f64;
        let seen = visible.get(&obj.instance_id).copied().unwrap_or(0) as f64;
        visible_fraction.insert(obj.instance_id, if total > 0.0 { seen / total } else { 0.0 });
    }
    Ok(FrameMasks {
        width,
        height,
        id_mask,
        category_mask,
        visible_fraction,
        excluded,
    })
}

/// Renders id and category masks by casting one ray per pixel against every
/// object's box; the nearest hit wins.
pub fn render_masks(scene: &PlacedScene) -> Result<FrameMasks> {
    render_masks_with(scene, Exec::default())
}

pub fn render_masks_with(scene: &PlacedScene, exec: Exec) -> Result<FrameMasks> {
    scene.validate()?;
    let covs = coverages(scene, exec);
    compose(scene, &covs)
}
