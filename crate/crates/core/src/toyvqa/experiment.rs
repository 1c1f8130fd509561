use std::fmt::Write as _;

use log::warn;
use serde::{Deserialize, Serialize};

use super::train::{evaluate, train, EvalReport, Method, TrainConfig, TrainSet, Vocabulary};
use crate::compositor::{generate_scene, GeneratedScene, SceneContext};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{simulate_features, FeatureStore, ProfileSpec};
use crate::qa::{Grammar, QATriplet, QType, QaGenerator, Split};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub real_train_scenes: usize,
    pub synthetic_scenes: usize,
    pub real_test_scenes: usize,
    /// Template ids to cycle through; empty means all.
    pub templates: Vec<String>,
    pub real_profile: ProfileSpec,
    pub synthetic_profile: ProfileSpec,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Also train on the real set alone.
    pub baseline: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            real_train_scenes: 900,
            synthetic_scenes: 900,
            real_test_scenes: 200,
            templates: Vec::new(),
            real_profile: ProfileSpec {
                seed: 1,
                ..ProfileSpec::default()
            },
            synthetic_profile: ProfileSpec {
                mix: 0.5,
                offset: 1.0,
                seed: 2,
                ..ProfileSpec::default()
            },
            train: TrainConfig::default(),
            seeds: vec![1, 2, 3, 4, 5],
            methods: Method::ALL.to_vec(),
            baseline: true,
        }
    }
}

/// The two-domain benchmark for one seed: real-like training data without
/// counting questions, synthetic data with counting questions only, and a
/// real-like test set with every question type.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub real: TrainSet,
    pub synthetic: TrainSet,
    pub test_triplets: Vec<QATriplet>,
    pub test_store: FeatureStore,
    pub vocab: Vocabulary,
}

const REAL_TRAIN_TYPES: [QType; 3] = [QType::Yesno, QType::Color, QType::Material];
const TEST_TYPES: [QType; 4] = [QType::Counting, QType::Yesno, QType::Color, QType::Material];

/// Generates `n` scenes, dropping (with a warning) any whose placement
/// attempts run out.
fn scenes(ctx: &SceneContext, templates: &[String], prefix: &str, n: usize, seed: u64, exec: Exec) -> Result<Vec<(String, GeneratedScene)>> {
    let ids: Vec<String> = if templates.is_empty() {
        ctx.templates.ids().into_iter().map(String::from).collect()
    } else {
        templates.to_vec()
    };
    let results = exec.map_range(n, |i| {
        let id = format!("{prefix}-{i:05}");
        let s = rng::derive_seed(seed, prefix, i as u64);
        generate_scene(ctx, &ids[i % ids.len()], &id, s).map(|g| (id, g))
    });
    let mut out = Vec::with_capacity(n);
    for r in results {
        match r {
            Ok(g) => out.push(g),
            Err(Error::Exhausted { scene, attempts }) => warn!("dropping {scene} after {attempts} attempts"),
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() && n > 0 {
        return Err(Error::Validation(format!("no {prefix} scene could be generated")));
    }
    Ok(out)
}

fn domain_set(
    ctx: &SceneContext,
    cfg: &ExperimentConfig,
    prefix: &str,
    n: usize,
    domain: Domain,
    profile: &ProfileSpec,
    qtypes: &[QType],
    seed: u64,
    exec: Exec,
) -> Result<(Vec<QATriplet>, FeatureStore)> {
    let generated = scenes(ctx, &cfg.templates, prefix, n, seed, exec)?;
    let gen = QaGenerator::new(Grammar::from_library(&ctx.library)?, domain);
    let profile = profile.build(domain)?;
    let categories = ctx.library.categories();
    let per_scene = exec.try_map_range(generated.len(), |i| {
        let (id, g) = &generated[i];
        let qa = gen.generate(id, &g.graph, &g.report, qtypes, rng::derive_seed(seed, "qa", i as u64))?;
        let rec = simulate_features(&g.placed, &profile, &categories, rng::derive_seed(seed, "features", 0))?;
        Ok::<_, Error>((qa, rec))
    })?;
    let mut triplets = Vec::new();
    let mut records = Vec::new();
    for (qa, rec) in per_scene {
        triplets.extend(qa);
        records.push(rec);
    }
    Ok((triplets, FeatureStore::new(records)?))
}

pub fn build_experiment_data(ctx: &SceneContext, cfg: &ExperimentConfig, seed: u64, exec: Exec) -> Result<ExperimentData> {
    let (real_pool, real_store) = domain_set(
        ctx,
        cfg,
        "real-train",
        cfg.real_train_scenes,
        Domain::R,
        &cfg.real_profile,
        &TEST_TYPES,
        rng::derive_seed(seed, "real-train", 0),
        exec,
    )?;
    let (synthetic, synthetic_store) = domain_set(
        ctx,
        cfg,
        "synthetic",
        cfg.synthetic_scenes,
        Domain::W,
        &cfg.synthetic_profile,
        &[QType::Counting],
        rng::derive_seed(seed, "synthetic", 0),
        exec,
    )?;
    let (mut test_triplets, test_store) = domain_set(
        ctx,
        cfg,
        "real-test",
        cfg.real_test_scenes,
        Domain::R,
        &cfg.real_profile,
        &TEST_TYPES,
        rng::derive_seed(seed, "real-test", 0),
        exec,
    )?;
    for t in &mut test_triplets {
        t.split = Split::Test;
    }
    let vocab = Vocabulary::from_triplets(
        real_pool.iter().chain(&test_triplets),
        real_pool.iter().chain(&synthetic).chain(&test_triplets),
    );
    // the real side never sees counting questions during training
    let real_triplets = real_pool.into_iter().filter(|t| REAL_TRAIN_TYPES.contains(&t.qtype)).collect();
    Ok(ExperimentData {
        real: TrainSet {
            domain: Domain::R,
            triplets: real_triplets,
            store: real_store,
        },
        synthetic: TrainSet {
            domain: Domain::W,
            triplets: synthetic,
            store: synthetic_store,
        },
        test_triplets,
        test_store,
        vocab,
    })
}

/// One trained model's scores. `method` is `None` for the real-only
/// baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub method: Option<Method>,
    pub seed: u64,
    pub report: EvalReport,
}

impl RunResult {
    pub fn label(&self) -> &'static str {
        self.method.map_or("real-only", Method::as_str)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub runs: Vec<RunResult>,
}

/// Mean Numeric / Others / Overall accuracy over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub numeric: f64,
    pub others: f64,
    pub overall: f64,
    pub runs: usize,
}

impl ExperimentResult {
    pub fn summary(&self, method: Option<Method>) -> Option<MethodSummary> {
        let runs: Vec<&RunResult> = self.runs.iter().filter(|r| r.method == method).collect();
        if runs.is_empty() {
            return None;
        }
        let mean = |f: &dyn Fn(&EvalReport) -> Option<f64>| {
            let v: Vec<f64> = runs.iter().filter_map(|r| f(&r.report)).collect();
            if v.is_empty() {
                f64::NAN
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        Some(MethodSummary {
            numeric: mean(&|r| r.numeric.map(|s| s.accuracy)),
            others: mean(&|r| r.others.map(|s| s.accuracy)),
            overall: mean(&|r| r.overall.map(|s| s.accuracy)),
            runs: runs.len(),
        })
    }

    /// Aligned plain-text table: one row per method and seed, then the
    /// per-method means.
    pub fn table(&self) -> String {
        let fmt = |s: Option<f64>| s.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = String::new();
        let _ = writeln!(out, "{:<20} {:>6} {:>8} {:>8} {:>8}", "method", "seed", "numeric", "others", "overall");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>8} {:>8} {:>8}",
                r.label(),
                r.seed,
                fmt(r.report.numeric.map(|s| s.accuracy)),
                fmt(r.report.others.map(|s| s.accuracy)),
                fmt(r.report.overall.map(|s| s.accuracy)),
            );
        }
        let mut labels: Vec<Option<Method>> = Vec::new();
        for r in &self.runs {
            if !labels.contains(&r.method) {
                labels.push(r.method);
            }
        }
        for m in labels {
            let s = self.summary(m).expect("label from runs");
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>8.2} {:>8.2} {:>8.2}",
                m.map_or("real-only", Method::as_str),
                "mean",
                s.numeric,
                s.others,
                s.overall
            );
        }
        out
    }
}

/// Trains every configured method (and the real-only baseline) for each
/// seed on that seed's data and evaluates on the real-like test set. Run
/// seeds are split off `master_seed`; results are labelled with the
/// configured seed.
pub fn run_experiment(ctx: &SceneContext, cfg: &ExperimentConfig, master_seed: u64, exec: Exec) -> Result<ExperimentResult> {
    cfg.train.validate()?;
    let mut runs = Vec::new();
    for &label in &cfg.seeds {
        let seed = rng::derive_seed(master_seed, "experiment-run", label);
        let data = build_experiment_data(ctx, cfg, seed, exec)?;
        let mut jobs: Vec<Option<Method>> = cfg.methods.iter().copied().map(Some).collect();
        if cfg.baseline {
            jobs.insert(0, None);
        }
        let results = exec.try_map_range(jobs.len(), |i| {
            let m = jobs[i];
            let trained = match m {
                None => train(std::slice::from_ref(&data.real), &data.vocab, Method::Simple, &cfg.train, seed)?,
                Some(m) => train(&[data.real.clone(), data.synthetic.clone()], &data.vocab, m, &cfg.train, seed)?,
            };
            let report = evaluate(&trained, &data.test_triplets, &data.test_store, Exec::Sequential)?;
            Ok::<_, Error>(RunResult { method: m, seed: label, report })
        })?;
        runs.extend(results);
    }
    Ok(ExperimentResult { runs })
}
