use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::index::sample;
use serde_json::json;

use super::config::{DatasetRef, PipelineConfig};
use super::{Command, StageOutput};
use crate::align::{mmd, permutation_test, Matrix};
use crate::compositor::{generate_scene, write_masks, PlacedScene, VerificationReport};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{build_dictionary, fswap, load_store, save_store, simulate_features, FeatureDict, FeatureStore, SwapConfig, SwapSource};
use crate::qa::{build_dataset, read_jsonl, write_jsonl, Grammar, QATriplet, QaGenerator, SceneFacts};
use crate::rng;
use crate::scene::SceneGraph;
use crate::toyvqa::{evaluate, load_trained, run_experiment, save_trained, train, TrainSet, Vocabulary};

pub(crate) fn run_stage(command: Command, cfg: &PipelineConfig, out: &Path, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    info!("running {} into {}", command.as_str(), dir.display());
    match command {
        Command::Generate => generate(cfg, dir, seed, exec),
        Command::Qa => qa(cfg, out, dir, seed, exec),
        Command::Features => features(cfg, out, dir, seed, exec),
        Command::Dict => dict(cfg, out, dir),
        Command::Swap => swap(cfg, out, dir, seed),
        Command::Mmd => mmd_report(cfg, dir, seed, exec),
        Command::Train => train_model(cfg, dir, seed),
        Command::Eval => eval(cfg, out, dir, exec),
        Command::Experiment => experiment(cfg, dir, seed, exec),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path.display().to_string(), e.line(), e.to_string()))
}

/// An input path that must exist before the stage starts.
fn existing(label: &str, p: Option<&PathBuf>, default: Option<PathBuf>) -> Result<PathBuf> {
    let p = p.cloned().or(default).ok_or_else(|| Error::Config(format!("{label} is not set")))?;
    if !p.exists() {
        return Err(Error::Config(format!("{label} `{}` does not exist", p.display())));
    }
    Ok(p)
}

fn scene_stems(dir: &Path) -> Result<Vec<String>> {
    let mut stems: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".graph.toml")).map(String::from))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(Error::Config(format!("no scenes in {}", dir.display())));
    }
    Ok(stems)
}

fn generate(cfg: &PipelineConfig, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    let ctx = cfg.scene_context()?;
    let ids: Vec<String> = if cfg.templates.is_empty() {
        ctx.templates.ids().into_iter().map(String::from).collect()
    } else {
        cfg.templates.clone()
    };
    let results = exec.map_range(cfg.scenes, |i| {
        let id = format!("scene-{i:05}");
        generate_scene(&ctx, &ids[i % ids.len()], &id, rng::derive_seed(seed, "scene", i as u64)).map(|g| (id, g))
    });
    let allowed = (cfg.max_dropped_fraction * cfg.scenes as f64).floor() as usize;
    let mut dropped = Vec::new();
    let mut kept = 0;
    for r in results {
        match r {
            Ok((id, g)) => {
                write(&dir.join(format!("{id}.graph.toml")), g.graph.to_toml())?;
                write(&dir.join(format!("{id}.scene.toml")), g.placed.to_toml())?;
                write(&dir.join(format!("{id}.report.json")), json_pretty(&g.report))?;
                write_masks(dir, &id, &g.masks)?;
                kept += 1;
            }
            Err(Error::Exhausted { scene, attempts }) => {
                warn!("dropping {scene} after {attempts} attempts");
                if dropped.len() == allowed {
                    return Err(Error::Exhausted { scene, attempts });
                }
                dropped.push(scene);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(StageOutput {
        inputs: [("library", &cfg.library), ("templates", &cfg.template_file)]
            .into_iter()
            .filter_map(|(l, p)| p.clone().map(|p| (l.to_string(), p)))
            .collect(),
        summary: json!({ "domain": cfg.domain, "scenes": kept, "dropped": dropped }),
    })
}

fn qa(cfg: &PipelineConfig, out: &Path, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    let scenes = existing("qa.scenes", cfg.qa.scenes.as_ref(), Some(out.join("scenes")))?;
    let ctx = cfg.scene_context()?;
    let stems = scene_stems(&scenes)?;
    let loaded = exec.try_map_range(stems.len(), |i| {
        let graph = SceneGraph::load(scenes.join(format!("{}.graph.toml", stems[i])))?;
        let report: VerificationReport = read_json(&scenes.join(format!("{}.report.json", stems[i])))?;
        Ok::<_, Error>((graph, report))
    })?;
    let generator = QaGenerator::new(Grammar::from_library(&ctx.library)?, cfg.domain);
    let triplets: Vec<QATriplet> = match cfg.qa.resolved_mix()? {
        Some(mix) => {
            let facts: Vec<SceneFacts> = stems
                .iter()
                .zip(&loaded)
                .map(|(id, (graph, report))| SceneFacts {
                    image_id: id,
                    graph,
                    report,
                })
                .collect();
            build_dataset(&generator, &facts, &mix, seed, exec)?
        }
        None => exec
            .try_map_range(stems.len(), |i| {
                let (graph, report) = &loaded[i];
                generator.generate(&stems[i], graph, report, &cfg.qa.qtypes, rng::derive_seed(seed, "qa-scene", i as u64))
            })?
            .into_iter()
            .flatten()
            .collect(),
    };
    write_jsonl(&dir.join("triplets.jsonl"), &triplets)?;
    let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
    for t in &triplets {
        *per_type.entry(t.qtype.as_str().to_string()).or_default() += 1;
    }
    Ok(StageOutput {
        inputs: vec![("scenes".into(), scenes)],
        summary: json!({ "domain": cfg.domain, "triplets": triplets.len(), "per_type": per_type }),
    })
}

fn features(cfg: &PipelineConfig, out: &Path, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    if let Some(src) = &cfg.features.ingest {
        let src = existing("features.ingest", Some(src), None)?;
        let store = load_store(&src)?;
        for rec in store.records() {
            rec.validate(cfg.features.n_max)?;
        }
        save_store(dir, &store)?;
        return Ok(StageOutput {
            inputs: vec![("ingest".into(), src)],
            summary: json!({ "mode": "ingest", "records": store.len(), "regions": store.region_count() }),
        });
    }
    let scenes = existing("features.scenes", cfg.features.scenes.as_ref(), Some(out.join("scenes")))?;
    let ctx = cfg.scene_context()?;
    let stems = scene_stems(&scenes)?;
    let profile = cfg.profiles.get(cfg.domain).build(cfg.domain)?;
    let categories = ctx.library.categories();
    let records = exec.try_map_range(stems.len(), |i| {
        let placed = PlacedScene::load(scenes.join(format!("{}.scene.toml", stems[i])))?;
        let rec = simulate_features(&placed, &profile, &categories, seed)?;
        rec.validate(cfg.features.n_max)?;
        Ok::<_, Error>(rec)
    })?;
    let store = FeatureStore::new(records)?;
    save_store(dir, &store)?;
    Ok(StageOutput {
        inputs: vec![("scenes".into(), scenes)],
        summary: json!({ "mode": "simulate", "domain": cfg.domain, "dim": profile.dim, "records": store.len(), "regions": store.region_count() }),
    })
}

fn dict(cfg: &PipelineConfig, out: &Path, dir: &Path) -> Result<StageOutput> {
    let src = existing("dict.features", cfg.dict.features.as_ref(), Some(out.join("features")))?;
    let store = load_store(&src)?;
    let d = build_dictionary(&store, cfg.domain);
    write(&dir.join("dict.json"), json_pretty(&d))?;
    Ok(StageOutput {
        inputs: vec![("features".into(), src)],
        summary: json!({ "domain": cfg.domain, "labels": d.entries.len(), "regions": d.len() }),
    })
}

fn swap(cfg: &PipelineConfig, out: &Path, dir: &Path, seed: u64) -> Result<StageOutput> {
    let input = existing("swap.input", cfg.swap.input.as_ref(), None)?;
    let sources: Vec<(PathBuf, PathBuf)> = if cfg.swap.sources.is_empty() {
        vec![(out.join("dict").join("dict.json"), out.join("features"))]
    } else {
        cfg.swap.sources.iter().map(|s| (s.dict.clone(), s.features.clone())).collect()
    };
    let mut inputs = vec![("input".to_string(), input.clone())];
    let mut loaded: Vec<(FeatureDict, FeatureStore)> = Vec::new();
    for (i, (d, f)) in sources.iter().enumerate() {
        let d = existing(&format!("swap.sources[{i}].dict"), Some(d), None)?;
        let f = existing(&format!("swap.sources[{i}].features"), Some(f), None)?;
        loaded.push((read_json(&d)?, load_store(&f)?));
        inputs.push((format!("sources[{i}].dict"), d));
        inputs.push((format!("sources[{i}].features"), f));
    }
    let source = SwapSource::new(loaded.iter().map(|(d, s)| (d, s)).collect())?;
    let swap_cfg = SwapConfig {
        lambda: cfg.swap.lambda,
        seed,
        sources: loaded.iter().map(|(d, _)| d.domain).collect(),
    };
    swap_cfg.validate()?;
    let store = load_store(&input)?;
    let mut swapped_regions = 0;
    let records: Vec<_> = store
        .records()
        .iter()
        .map(|rec| {
            let s = fswap(rec, &source, &swap_cfg);
            swapped_regions += rec.regions.iter().zip(&s.regions).filter(|(a, b)| a.feature != b.feature).count();
            s
        })
        .collect();
    save_store(dir, &FeatureStore::new(records)?)?;
    Ok(StageOutput {
        inputs,
        summary: json!({ "lambda": cfg.swap.lambda, "records": store.len(), "regions": store.region_count(), "swapped_regions": swapped_regions }),
    })
}

/// Up to `cap` rows of a store, chosen without replacement.
fn sample_rows(store: &FeatureStore, cap: usize, seed: u64, label: &str) -> Result<Matrix> {
    let rows = store.rows();
    let rows = if rows.len() > cap {
        let mut idx = sample(&mut rng::stream(seed, label, 0), rows.len(), cap).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| rows[i].clone()).collect()
    } else {
        rows
    };
    Matrix::from_rows(&rows)
}

fn mmd_report(cfg: &PipelineConfig, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    let m = &cfg.mmd;
    let xp = existing("mmd.x", m.x.as_ref(), None)?;
    let yp = existing("mmd.y", m.y.as_ref(), None)?;
    let x = sample_rows(&load_store(&xp)?, m.max_rows, seed, "x")?;
    let y = sample_rows(&load_store(&yp)?, m.max_rows, seed, "y")?;
    let value = mmd(&x, &y, &m.kernel)?;
    let test = permutation_test(&x, &y, &m.kernel, m.permutations, m.level, seed, exec)?;
    let report = json!({
        "n_x": x.rows,
        "n_y": y.rows,
        "dim": x.cols,
        "mmd": value,
        "permutations": m.permutations,
        "level": m.level,
        "threshold": test.threshold,
        "p_value": test.p_value,
        "rejects_same_distribution": test.rejects(),
    });
    write(&dir.join("report.json"), json_pretty(&report))?;
    Ok(StageOutput {
        inputs: vec![("x".into(), xp), ("y".into(), yp)],
        summary: report,
    })
}

fn load_set(label: &str, r: &DatasetRef) -> Result<(TrainSet, Vec<(String, PathBuf)>)> {
    let qa = existing(&format!("{label}.qa"), Some(&r.qa), None)?;
    let features = existing(&format!("{label}.features"), Some(&r.features), None)?;
    let set = TrainSet {
        domain: r.domain,
        triplets: read_jsonl(&qa)?,
        store: load_store(&features)?,
    };
    Ok((set, vec![(format!("{label}.qa"), qa), (format!("{label}.features"), features)]))
}

fn train_model(cfg: &PipelineConfig, dir: &Path, seed: u64) -> Result<StageOutput> {
    let t = &cfg.train;
    if t.sets.is_empty() {
        return Err(Error::Config("train.sets is empty".into()));
    }
    let mut sets = Vec::new();
    let mut inputs = Vec::new();
    for (i, r) in t.sets.iter().enumerate() {
        let (s, inp) = load_set(&format!("train.sets[{i}]"), r)?;
        sets.push(s);
        inputs.extend(inp);
    }
    let mut extra = Vec::new();
    for (i, p) in t.extra_answers.iter().enumerate() {
        let p = existing(&format!("train.extra_answers[{i}]"), Some(p), None)?;
        extra.extend(read_jsonl(&p)?);
        inputs.push((format!("extra_answers[{i}]"), p));
    }
    let real = sets.iter().filter(|s| s.domain == Domain::R).flat_map(|s| &s.triplets).chain(&extra);
    let all = sets.iter().flat_map(|s| &s.triplets).chain(&extra);
    let vocab = Vocabulary::from_triplets(real, all);
    let trained = train(&sets, &vocab, t.method, &t.config, seed)?;
    save_trained(dir, &trained)?;
    let lines: String = trained.losses.iter().enumerate().map(|(i, l)| format!("{i},{l:.17e}\n")).collect();
    write(&dir.join("losses.csv"), format!("step,loss\n{lines}"))?;
    Ok(StageOutput {
        inputs,
        summary: json!({
            "method": t.method,
            "steps": trained.losses.len(),
            "final_loss": trained.losses.last(),
            "answers": trained.model.answers.len(),
        }),
    })
}

fn eval(cfg: &PipelineConfig, out: &Path, dir: &Path, exec: Exec) -> Result<StageOutput> {
    let model = existing("eval.model", cfg.eval.model.as_ref(), Some(out.join("model")))?;
    let set = cfg.eval.set.as_ref().ok_or_else(|| Error::Config("eval.set is not set".into()))?;
    let (set, mut inputs) = load_set("eval.set", set)?;
    let trained = load_trained(&model)?;
    let report = evaluate(&trained, &set.triplets, &set.store, exec)?;
    let line = |name: &str, s: Option<crate::toyvqa::SplitScore>| match s {
        Some(s) => format!("{name:<8} {:>7.2} {:>6}/{}\n", s.accuracy, s.correct, s.total),
        None => format!("{name:<8} {:>7}\n", "-"),
    };
    let text = format!(
        "split    accuracy correct/total\n{}{}{}",
        line("numeric", report.numeric),
        line("others", report.others),
        line("overall", report.overall)
    );
    write(&dir.join("report.txt"), text)?;
    write(&dir.join("report.json"), json_pretty(&report))?;
    inputs.insert(0, ("model".into(), model));
    Ok(StageOutput {
        inputs,
        summary: serde_json::to_value(report).expect("report serializes"),
    })
}

fn experiment(cfg: &PipelineConfig, dir: &Path, seed: u64, exec: Exec) -> Result<StageOutput> {
    let ctx = cfg.scene_context()?;
    let result = run_experiment(&ctx, &cfg.experiment, seed, exec)?;
    write(&dir.join("results.txt"), result.table())?;
    write(&dir.join("results.json"), json_pretty(&result))?;
    let mut means = serde_json::Map::new();
    let mut labels: Vec<Option<crate::toyvqa::Method>> = Vec::new();
    for r in &result.runs {
        if !labels.contains(&r.method) {
            labels.push(r.method);
        }
    }
    for m in labels {
        let s = result.summary(m).expect("label from runs");
        means.insert(m.map_or("real-only", |m| m.as_str()).to_string(), json!(s));
    }
    Ok(StageOutput {
        inputs: Vec::new(),
        summary: json!({ "runs": result.runs.len(), "means": means }),
    })
}
