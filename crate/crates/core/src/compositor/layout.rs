use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::camera::{CameraView, Projection, RenderConfig, ScreenBounds};
use super::{PlacedObject, PlacedScene};
use crate::error::{Error, Result};
use crate::geometry::{
    place_object_within, settle, CameraConfig, Footprint, PlacementRequest, Support,
};
use crate::rng::StreamRng;
use crate::scene::{AssetLibrary, SceneGraph, SceneTemplate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    /// Largest |theta - theta_c| for floor objects (degrees).
    pub max_offset_deg: f64,
    /// Placement attempts per instance before the layout gives up.
    pub attempts: usize,
    /// Largest allowed projected-box overlap coefficient between two objects
    /// that do not support one another.
    pub max_box_overlap: f64,
    /// Smallest projected box area in pixels.
    pub min_box_area: f64,
    /// Clearance between floor footprints (m).
    pub floor_gap: f64,
    /// Clearance between footprints sharing a support (m).
    pub surface_gap: f64,
    /// Objects start up to this far above their resting height before settling.
    pub max_drop: f64,
    /// Camera height above the floor (m).
    pub camera_height: [f64; 2],
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            max_offset_deg: 30.0,
            attempts: 40,
            max_box_overlap: 0.25,
            min_box_area: 24.0,
            floor_gap: 0.1,
            surface_gap: 0.01,
            max_drop: 0.3,
            camera_height: [1.4, 1.7],
        }
    }
}

struct Slot {
    obj: PlacedObject,
    bounds: ScreenBounds,
    footprint: Footprint,
}

fn uniform(rng: &mut StreamRng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

fn supports_each_other(a: &PlacedObject, b: &PlacedObject) -> bool {
    a.support == Some(b.instance_id) || b.support == Some(a.instance_id)
}

/// Samples a camera and positions every instance of `graph` in view.
///
/// Floor nodes are dropped at camera-relative directions and distances drawn
/// from their template bands; nodes that rest on another node are dropped
/// onto a random instance of it. Every instance is settled, must project
/// fully inside the frame, and may not overlap the projected box of any
/// object other than its own support by more than `max_box_overlap`.
pub fn layout_scene(
    library: &AssetLibrary,
    template: &SceneTemplate,
    graph: &SceneGraph,
    render: &RenderConfig,
    cfg: &LayoutConfig,
    scene_id: &str,
    rng: &mut StreamRng,
) -> Result<PlacedScene> {
    let backdrops: Vec<_> = library.backdrops.iter().filter(|b| b.outdoor == template.outdoor).collect();
    let backdrop = *backdrops.choose(rng).ok_or_else(|| {
        Error::Layout(format!("library has no {} backdrop", if template.outdoor { "outdoor" } else { "indoor" }))
    })?;
    let ring = backdrop.radius * rng.random::<f64>().sqrt();
    let spin = rng.random_range(0.0..std::f64::consts::TAU);
    let camera = CameraConfig::new(
        ring * spin.cos(),
        backdrop.floor_y + uniform(rng, cfg.camera_height),
        ring * spin.sin(),
        rng.random_range(0.0..360.0),
        backdrop.floor_y,
    );
    let view = CameraView::new(&camera, render);
    let floor = Support::floor(camera.y_0);

    let mut order: Vec<_> = graph.nodes.iter().filter(|n| template.support_of(&n.node_id).is_none()).collect();
    order.extend(graph.nodes.iter().filter(|n| template.support_of(&n.node_id).is_some()));

    let mut slots: Vec<Slot> = Vec::new();
    for node in order {
        let tn = template.node(&node.node_id).ok_or_else(|| {
            Error::Validation(format!("graph node `{}` is not in template `{}`", node.node_id, template.id))
        })?;
        let asset = library.asset(&node.asset_id).ok_or_else(|| Error::Lookup {
            kind: "asset",
            name: node.asset_id.clone(),
        })?;
        let category_index = library.category_index(&asset.category).ok_or_else(|| Error::Lookup {
            kind: "category",
            name: asset.category.clone(),
        })?;
        let ext = asset.extents;
        let support_node = template.support_of(&node.node_id);
        let bases: Vec<usize> = match support_node {
            Some(s) => slots.iter().enumerate().filter(|(_, sl)| sl.obj.node_id == s).map(|(i, _)| i).collect(),
            None => Vec::new(),
        };
        if support_node.is_some() && bases.is_empty() {
            return Err(Error::Layout(format!("node `{}` has no placed support", node.node_id)));
        }

        for k in 0..node.count {
            let instance_id = slots.len() as u32 + 1;
            let mut placed = None;
            for _ in 0..cfg.attempts {
                let (position, support) = if support_node.is_some() {
                    let base = &slots[*bases.choose(rng).expect("bases is non-empty")];
                    let f = base.footprint;
                    let span = |lo: f64, hi: f64, half: f64, rng: &mut StreamRng| {
                        if hi - lo > 2.0 * half {
                            rng.random_range(lo + half..=hi - half)
                        } else {
                            (lo + hi) / 2.0
                        }
                    };
                    let x = span(f.x_min, f.x_max, ext[0] / 2.0, rng);
                    let z = span(f.z_min, f.z_max, ext[2] / 2.0, rng);
                    let top = base.obj.top().height;
                    let y = top + ext[1] / 2.0 + uniform(rng, [0.0, cfg.max_drop]);
                    let floor_tops: Vec<Support> = std::iter::once(floor)
                        .chain(slots.iter().filter(|s| s.obj.support.is_none()).map(|s| s.obj.top()))
                        .collect();
                    let p = settle(crate::geometry::Position::new(x, y, z), ext, &floor_tops)?;
                    if (p.y - ext[1] / 2.0 - top).abs() > 1e-9 {
                        continue;
                    }
                    (p, Some(base.obj.instance_id))
                } else {
                    let req = PlacementRequest {
                        r: uniform(rng, tn.depth),
                        theta: camera.theta_c + uniform(rng, tn.lateral) * cfg.max_offset_deg,
                        h: ext[1] / 2.0 + uniform(rng, [0.0, cfg.max_drop]),
                    };
                    let p = place_object_within(&camera, &req, cfg.max_offset_deg)?;
                    (settle(p, ext, &[floor])?, None)
                };

                let footprint = Footprint::around(position, ext);
                let collides = slots.iter().any(|s| {
                    if s.obj.support != support {
                        return false;
                    }
                    let gap = if support.is_some() { cfg.surface_gap } else { cfg.floor_gap };
                    s.footprint.intersects(&footprint, gap)
                });
                if collides {
                    continue;
                }
                let Projection::Bounded(bounds) = view.project_box(position, ext) else {
                    continue;
                };
                if !view.inside_image(&bounds) || bounds.area() < cfg.min_box_area {
                    continue;
                }
                let obj = PlacedObject {
                    instance_id,
                    node_id: node.node_id.clone(),
                    asset_id: asset.asset_id.clone(),
                    category: asset.category.clone(),
                    category_index,
                    color: node.color.clone().unwrap_or_else(|| asset.default_color.clone()),
                    material: node.material.clone().unwrap_or_else(|| asset.default_material.clone()),
                    size_class: asset.size_class,
                    position,
                    extents: ext,
                    support,
                };
                let crowded = slots.iter().any(|s| {
                    !supports_each_other(&s.obj, &obj) && s.bounds.overlap_coefficient(&bounds) > cfg.max_box_overlap
                });
                if crowded {
                    continue;
                }
                placed = Some(Slot { obj, bounds, footprint });
                break;
            }
            let slot = placed.ok_or_else(|| {
                Error::Layout(format!(
                    "{scene_id}: node `{}` instance {} found no free spot in {} attempts",
                    node.node_id,
                    k + 1,
                    cfg.attempts
                ))
            })?;
            slots.push(slot);
        }
    }

    Ok(PlacedScene {
        scene_id: scene_id.to_string(),
        template_id: template.id.clone(),
        backdrop_id: backdrop.id.clone(),
        camera,
        render: *render,
        objects: slots.into_iter().map(|s| s.obj).collect(),
    })
}
