use log::debug;
use serde::{Deserialize, Serialize};

use super::camera::RenderConfig;
use super::layout::{layout_scene, LayoutConfig};
use super::render::{compose, coverages, FrameMasks};
use super::verify::{verify_with, VerificationReport, VerifyConfig};
use super::PlacedScene;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng;
use crate::scene::{sample_scene_graph, AssetLibrary, SceneGraph, TemplateSet};

/// Everything scene generation reads. Immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct SceneContext {
    pub library: AssetLibrary,
    pub templates: TemplateSet,
    pub render: RenderConfig,
    pub layout: LayoutConfig,
    pub verify: VerifyConfig,
    /// Regenerations allowed after a failed layout or verification.
    pub max_retries: usize,
}

impl SceneContext {
    pub fn new(library: AssetLibrary, templates: TemplateSet) -> Self {
        Self {
            library,
            templates,
            render: RenderConfig::default(),
            layout: LayoutConfig::default(),
            verify: VerifyConfig::default(),
            max_retries: 10,
        }
    }

    pub fn shipped() -> Self {
        Self::new(AssetLibrary::shipped(), TemplateSet::shipped())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratedScene {
    pub graph: SceneGraph,
    pub placed: PlacedScene,
    pub masks: FrameMasks,
    pub report: VerificationReport,
    /// Zero-based regeneration that passed.
    pub attempt: usize,
}

/// Samples, lays out, renders and verifies one scene, regenerating from a
/// fresh seed stream whenever layout or verification fails.
pub fn generate_scene(ctx: &SceneContext, template_id: &str, scene_id: &str, seed: u64) -> Result<GeneratedScene> {
    let template = ctx.templates.get(template_id)?;
    for attempt in 0..=ctx.max_retries {
        let s = rng::derive_seed(seed, "regenerate", attempt as u64);
        let graph = sample_scene_graph(&ctx.library, &ctx.templates, template_id, s)?;
        let mut r = rng::stream(s, "layout", 0);
        let placed = match layout_scene(&ctx.library, template, &graph, &ctx.render, &ctx.layout, scene_id, &mut r) {
            Ok(p) => p,
            Err(e @ (Error::Layout(_) | Error::FallsOutside { .. })) => {
                debug!("{scene_id} attempt {attempt}: {e}");
                continue;
            }
            Err(e) => return Err(e),
        };
        let covs = coverages(&placed, Exec::Sequential);
        let masks = compose(&placed, &covs)?;
        let report = verify_with(&masks, &placed, &covs, &ctx.verify)?;
        if report.pass {
            return Ok(GeneratedScene {
                graph,
                placed,
                masks,
                report,
                attempt,
            });
        }
        debug!("{scene_id} attempt {attempt}: verification failed");
    }
    Err(Error::Exhausted {
        scene: scene_id.to_string(),
        attempts: ctx.max_retries + 1,
    })
}
