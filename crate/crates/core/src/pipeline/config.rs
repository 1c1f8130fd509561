use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::KernelConfig;
use crate::compositor::SceneContext;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::features::{ProfileSpec, DEFAULT_N_MAX};
use crate::qa::{QType, QaMix};
use crate::scene::{AssetLibrary, TemplateSet};
use crate::toyvqa::{ExperimentConfig, Method, TrainConfig};

/// One feature profile per domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Profiles {
    #[serde(rename = "R")]
    pub r: ProfileSpec,
    #[serde(rename = "W")]
    pub w: ProfileSpec,
    #[serde(rename = "H")]
    pub h: ProfileSpec,
}

impl Default for Profiles {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            r: e.real_profile,
            w: e.synthetic_profile.clone(),
            h: ProfileSpec {
                seed: 3,
                ..e.synthetic_profile
            },
        }
    }
}

impl Profiles {
    pub fn get(&self, d: Domain) -> &ProfileSpec {
        match d {
            Domain::R => &self.r,
            Domain::W => &self.w,
            Domain::H => &self.h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaStage {
    /// Scene directory; defaults to `<out>/scenes`.
    pub scenes: Option<PathBuf>,
    /// Named mix (`w-desk`, `w-full`); takes precedence over `mix`.
    pub preset: Option<String>,
    /// Exact per-type counts. Without a preset or mix every applicable
    /// question of `qtypes` is emitted.
    pub mix: Option<QaMix>,
    pub qtypes: Vec<QType>,
}

impl Default for QaStage {
    fn default() -> Self {
        Self {
            scenes: None,
            preset: None,
            mix: None,
            qtypes: QType::ALL.to_vec(),
        }
    }
}

impl QaStage {
    pub fn resolved_mix(&self) -> Result<Option<QaMix>> {
        match &self.preset {
            Some(name) => QaMix::preset(name).map(Some),
            None => Ok(self.mix),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureStage {
    /// Scene directory to simulate from; defaults to `<out>/scenes`.
    pub scenes: Option<PathBuf>,
    /// Directory of `.svqf` files to validate and copy instead of simulating.
    pub ingest: Option<PathBuf>,
    pub n_max: usize,
}

impl Default for FeatureStage {
    fn default() -> Self {
        Self {
            scenes: None,
            ingest: None,
            n_max: DEFAULT_N_MAX,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictStage {
    /// Feature directory; defaults to `<out>/features`.
    pub features: Option<PathBuf>,
}

/// A feature dictionary and the store its references resolve against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapSourcePaths {
    pub dict: PathBuf,
    pub features: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwapStage {
    /// Real feature directory to swap into.
    pub input: Option<PathBuf>,
    /// Defaults to `<out>/dict/dict.json` over `<out>/features`.
    pub sources: Vec<SwapSourcePaths>,
    pub lambda: f64,
}

impl Default for SwapStage {
    fn default() -> Self {
        Self {
            input: None,
            sources: Vec::new(),
            lambda: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MmdStage {
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub kernel: KernelConfig,
    pub permutations: usize,
    pub level: f64,
    /// Each side is subsampled (seeded, without replacement) to this many
    /// regions.
    pub max_rows: usize,
}

impl Default for MmdStage {
    fn default() -> Self {
        Self {
            x: None,
            y: None,
            kernel: KernelConfig::default(),
            permutations: 200,
            level: 0.99,
            max_rows: 1000,
        }
    }
}

/// Questions plus the features they refer to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRef {
    pub domain: Domain,
    pub qa: PathBuf,
    pub features: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainStage {
    pub method: Method,
    pub sets: Vec<DatasetRef>,
    /// Question files whose answers belong to the real answer space even
    /// though no training set asks them (e.g. withheld counting answers).
    pub extra_answers: Vec<PathBuf>,
    pub config: TrainConfig,
}

impl Default for TrainStage {
    fn default() -> Self {
        Self {
            method: Method::Simple,
            sets: Vec::new(),
            extra_answers: Vec::new(),
            config: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalStage {
    /// Model directory; defaults to `<out>/model`.
    pub model: Option<PathBuf>,
    pub set: Option<DatasetRef>,
}

/// Everything a pipeline run reads. Relative paths resolve against the
/// config file's directory; paths left unset default to the output tree of
/// the earlier stage. The output directory itself is not part of the config
/// so identical configs hash identically wherever they write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Asset library file; the shipped library when unset.
    pub library: Option<PathBuf>,
    /// Template file; the shipped templates when unset.
    pub template_file: Option<PathBuf>,
    /// Template ids cycled through by `generate`; empty means all.
    pub templates: Vec<String>,
    pub scenes: usize,
    /// Domain tag of generated scenes, questions and features.
    pub domain: Domain,
    /// Share of scenes allowed to exhaust their retries before `generate`
    /// fails.
    pub max_dropped_fraction: f64,
    pub qa: QaStage,
    pub profiles: Profiles,
    pub features: FeatureStage,
    pub dict: DictStage,
    pub swap: SwapStage,
    pub mmd: MmdStage,
    pub train: TrainStage,
    pub eval: EvalStage,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            library: None,
            template_file: None,
            templates: Vec::new(),
            scenes: 100,
            domain: Domain::W,
            max_dropped_fraction: 0.05,
            qa: QaStage::default(),
            profiles: Profiles::default(),
            features: FeatureStage::default(),
            dict: DictStage::default(),
            swap: SwapStage::default(),
            mmd: MmdStage::default(),
            train: TrainStage::default(),
            eval: EvalStage::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, source_name: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::from_toml(source_name, text, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses, rebases relative paths onto the file's directory and checks
    /// every referenced input that must already exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.for_each_path(|p| rebase(base, p));
        Ok(cfg)
    }

    fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        let opts = [
            &mut self.library,
            &mut self.template_file,
            &mut self.qa.scenes,
            &mut self.features.scenes,
            &mut self.features.ingest,
            &mut self.dict.features,
            &mut self.swap.input,
            &mut self.mmd.x,
            &mut self.mmd.y,
            &mut self.eval.model,
        ];
        for p in opts.into_iter().flatten() {
            f(p);
        }
        for s in &mut self.swap.sources {
            f(&mut s.dict);
            f(&mut s.features);
        }
        for s in self.train.sets.iter_mut().chain(self.eval.set.as_mut()) {
            f(&mut s.qa);
            f(&mut s.features);
        }
        for p in &mut self.train.extra_answers {
            f(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.max_dropped_fraction) {
            return Err(Error::Config("max_dropped_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.swap.lambda) {
            return Err(Error::Config(format!("swap lambda {} outside [0, 1]", self.swap.lambda)));
        }
        if self.features.n_max == 0 {
            return Err(Error::Config("features.n_max must be positive".into()));
        }
        if self.mmd.permutations == 0 || !(0.0 < self.mmd.level && self.mmd.level < 1.0) || self.mmd.max_rows < 2 {
            return Err(Error::Config("mmd needs permutations > 0, level in (0, 1) and max_rows ≥ 2".into()));
        }
        self.mmd.kernel.validate()?;
        self.qa.resolved_mix().map_err(|e| Error::Config(e.to_string()))?;
        for d in Domain::ALL {
            self.profiles.get(d).build(d).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.train.config.validate()?;
        self.experiment.train.validate()?;
        if self.experiment.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        Ok(())
    }

    /// Library, templates and the stage defaults for scene generation.
    pub fn scene_context(&self) -> Result<SceneContext> {
        // a broken library or template file is a configuration problem
        let as_config = |e: Error| match e {
            Error::Io { .. } | Error::Format { .. } => e,
            other => Error::Config(other.to_string()),
        };
        let library = match &self.library {
            Some(p) => AssetLibrary::load(p).map_err(as_config)?,
            None => AssetLibrary::shipped(),
        };
        let templates = match &self.template_file {
            Some(p) => TemplateSet::load(p).map_err(as_config)?,
            None => TemplateSet::shipped(),
        };
        for id in self.templates.iter().chain(&self.experiment.templates) {
            templates.get(id).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(SceneContext::new(library, templates))
    }
}
