//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use synthvqa::align::{
    adversarial_gradients, grad_check_adversarial, grad_check_mmd, mmd, permutation_test, train_mmd_alignment,
    AeShape, AlignConfig, AlignModel, GrlWeights, KernelConfig, Matrix, SyntheticBatch,
};
use synthvqa::compositor::{generate_scene, render_masks_with, GeneratedScene, PlacedScene, SceneContext};
use synthvqa::features::{build_dictionary, fswap, FeatureRecord, FeatureStore, Region, SwapConfig, SwapSource};
use synthvqa::geometry::{pairwise_geometry, place_object_within, CameraConfig, PlacementRequest, Position};
use synthvqa::pipeline::{self, hash_tree, Command, DatasetRef, PipelineConfig};
use synthvqa::qa::{Grammar, QType, QaGenerator};
use synthvqa::toyvqa::{build_experiment_data, run_experiment, ExperimentConfig, Method};
use synthvqa::{rng, Domain, Exec};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(n: usize, dim: usize, shift: f64, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, "acceptance-gaussian", 0);
    let data = (0..n * dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            z + shift
        })
        .collect();
    Matrix::from_vec(n, dim, data).unwrap()
}

fn geometry_suite() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1, "acceptance-geometry", 0);
    let mut point = || Position::new(r.random_range(-50.0..50.0), r.random_range(-50.0..50.0), r.random_range(-50.0..50.0));
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let (a, b, c) = (point(), point(), point());
        let ab = pairwise_geometry(a, b).unwrap();
        let ba = pairwise_geometry(b, a).unwrap();
        let ac = pairwise_geometry(a, c).unwrap();
        let bc = pairwise_geometry(b, c).unwrap();
        let az = (ab.a - (ba.a + 180.0).rem_euclid(360.0)).abs();
        let az = az.min(360.0 - az);
        worst = worst
            .max((ab.d - ba.d).abs())
            .max((ac.d - (ab.d + bc.d)).max(0.0))
            .max((ab.p + ba.p).abs())
            .max(az);
    }
    let o = Position::new(0.0, 0.0, 0.0);
    let t = pairwise_geometry(o, Position::new(3.0, 4.0, 0.0)).unwrap();
    let up = pairwise_geometry(o, Position::new(0.0, 0.0, 2.0)).unwrap();
    let fixtures = t.d == 5.0 && t.p == 0.0 && t.a == 4f64.atan2(3.0).to_degrees() && (up.d, up.p, up.a) == (2.0, 90.0, 0.0);
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && fixtures && secs < 5.0,
        format!("10000 triples, worst violation {worst:.2e}, fixtures {fixtures}, {secs:.2}s"),
    )
}

fn placement_round_trip() -> Outcome {
    let mut r = rng::stream(2, "acceptance-placement", 0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let cam = CameraConfig::new(
            r.random_range(-20.0..20.0),
            r.random_range(0.5..3.0),
            r.random_range(-20.0..20.0),
            r.random_range(0.0..360.0),
            r.random_range(-1.0..1.0),
        );
        let req = PlacementRequest {
            r: r.random_range(0.05..30.0),
            theta: cam.theta_c + r.random_range(-30.0..30.0),
            h: r.random_range(0.0..3.0),
        };
        let p = place_object_within(&cam, &req, 30.0).unwrap();
        let horizontal = (p.x - cam.x_c).hypot(p.z - cam.z_c);
        worst = worst.max((horizontal - req.r).abs());
    }
    check(worst <= 1e-9, format!("10000 placements, worst |r error| {worst:.2e}"))
}

/// Counts per category from a direct scan of the id mask against solo
/// renders of each object.
fn pixel_scan_counts(g: &GeneratedScene, min_visible: f64) -> BTreeMap<String, u32> {
    let mut visible: BTreeMap<u32, u64> = BTreeMap::new();
    for &id in &g.masks.id_mask {
        if id != 0 {
            *visible.entry(id as u32).or_default() += 1;
        }
    }
    let mut counts = BTreeMap::new();
    for o in &g.placed.objects {
        let mut only = o.clone();
        only.instance_id = 1;
        only.support = None;
        let solo = PlacedScene {
            objects: vec![only],
            ..g.placed.clone()
        };
        let alone = render_masks_with(&solo, Exec::Sequential).unwrap().id_mask.iter().filter(|&&i| i != 0).count();
        let seen = visible.get(&o.instance_id).copied().unwrap_or(0);
        if alone > 0 && seen as f64 / alone as f64 >= min_visible {
            *counts.entry(o.category.clone()).or_insert(0) += 1;
        }
    }
    counts
}

fn qa_soundness() -> Outcome {
    let start = Instant::now();
    let ctx = SceneContext::shipped();
    let gen = QaGenerator::new(Grammar::from_library(&ctx.library).unwrap(), Domain::W);
    let ids = ctx.templates.ids();
    let (mut total, mut counting, mut count_ok, mut parse_ok) = (0usize, 0usize, 0usize, 0usize);
    let mut per_type: BTreeMap<QType, usize> = BTreeMap::new();
    let mut i = 0u64;
    while total < 10_000 {
        let template = ids[i as usize % ids.len()];
        let scene_id = format!("acc-{i:05}");
        i += 1;
        let Ok(g) = generate_scene(&ctx, template, &scene_id, rng::derive_seed(3, "acceptance-scene", i)) else {
            continue;
        };
        let oracle = pixel_scan_counts(&g, ctx.verify.min_visible);
        for st in gen.generate_bound(&scene_id, &g.graph, &g.report, &QType::ALL, i).unwrap() {
            let t = &st.triplet;
            total += 1;
            *per_type.entry(t.qtype).or_default() += 1;
            let parsed = gen.grammar.parse(&t.question);
            if parsed.as_ref().ok() == Some(&st.bindings) {
                parse_ok += 1;
            }
            if t.qtype == QType::Counting {
                counting += 1;
                let noun = parsed.ok().and_then(|b| b.noun).unwrap_or_default();
                if oracle.get(&noun).copied().unwrap_or(0).to_string() == t.answer {
                    count_ok += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        per_type.len() == 5 && count_ok == counting && parse_ok == total && secs < 60.0,
        format!("{total} triplets from {i} scenes, {count_ok}/{counting} counts match the pixel scan, {parse_ok}/{total} parse back, types {per_type:?}, {secs:.1}s"),
    )
}

fn fswap_contract() -> Outcome {
    let mut r = rng::stream(4, "acceptance-fswap", 0);
    let labels = ["cup", "chair", "table", "lamp", "book", "plant", "ghost"];
    let feature = |r: &mut rand_chacha::ChaCha8Rng| (0..6).map(|_| r.random::<f32>()).collect::<Vec<f32>>();
    // "ghost" never appears in the source
    let source_records: Vec<FeatureRecord> = (0..60)
        .map(|i| FeatureRecord {
            image_id: format!("w{i}"),
            domain: Domain::W,
            regions: (0..r.random_range(1..8))
                .map(|_| Region {
                    feature: feature(&mut r),
                    pseudo_label: labels[r.random_range(0..6)].into(),
                    score: 0.9,
                })
                .collect(),
        })
        .collect();
    let mut by_label: BTreeMap<&str, Vec<Vec<u32>>> = BTreeMap::new();
    for rec in &source_records {
        for g in &rec.regions {
            by_label.entry(g.pseudo_label.as_str()).or_default().push(g.feature.iter().map(|x| x.to_bits()).collect());
        }
    }
    let store = FeatureStore::new(source_records.clone()).unwrap();
    let dict = build_dictionary(&store, Domain::W);
    let source = SwapSource::new(vec![(&dict, &store)]).unwrap();

    let mut failures = Vec::new();
    for k in 0..1000 {
        let m = r.random_range(1..30);
        let rec = FeatureRecord {
            image_id: format!("r{k}"),
            domain: Domain::R,
            regions: (0..m)
                .map(|_| Region {
                    feature: feature(&mut r),
                    pseudo_label: labels[r.random_range(0..labels.len())].into(),
                    score: 0.5,
                })
                .collect(),
        };
        let cfg = SwapConfig {
            lambda: 0.2,
            seed: k,
            sources: vec![Domain::W],
        };
        let out = fswap(&rec, &source, &cfg);
        let matched = rec.regions.iter().filter(|g| g.pseudo_label != "ghost").count();
        let expected = (m as f64 * 0.2 + 1e-9).floor() as usize;
        let expected = expected.min(matched);
        let changed: Vec<usize> = (0..m).filter(|&i| out.regions[i].feature != rec.regions[i].feature).collect();
        let mut a: Vec<&str> = rec.regions.iter().map(|g| g.pseudo_label.as_str()).collect();
        let mut b: Vec<&str> = out.regions.iter().map(|g| g.pseudo_label.as_str()).collect();
        a.sort();
        b.sort();
        let from_source = changed.iter().all(|&i| {
            let bits: Vec<u32> = out.regions[i].feature.iter().map(|x| x.to_bits()).collect();
            by_label.get(out.regions[i].pseudo_label.as_str()).is_some_and(|v| v.contains(&bits))
        });
        let identity = fswap(&rec, &source, &SwapConfig { lambda: 0.0, ..cfg.clone() }) == rec;
        if changed.len() != expected || a != b || !from_source || !identity {
            failures.push(k);
        }
    }
    check(failures.is_empty(), format!("1000 records, {} violations {:?}", failures.len(), &failures[..failures.len().min(5)]))
}

fn mmd_correctness() -> Outcome {
    let k = KernelConfig::default();
    let x = gaussian(500, 8, 0.0, 50);
    let self_mmd = mmd(&x, &x, &k).unwrap();
    let shifted = permutation_test(&x, &gaussian(500, 8, 1.0, 51), &k, 200, 0.99, 5, Exec::Parallel).unwrap();
    let same = permutation_test(&x, &gaussian(500, 8, 0.0, 52), &k, 200, 0.99, 5, Exec::Parallel).unwrap();
    check(
        self_mmd.abs() <= 1e-9 && shifted.rejects() && !same.rejects(),
        format!(
            "mmd(X,X) = {self_mmd:.1e}; shift {:.4} vs null q99 {:.4}; iid {:.4} vs {:.4}",
            shifted.statistic, shifted.threshold, same.statistic, same.threshold
        ),
    )
}

fn gradient_fidelity() -> Outcome {
    let shape = AeShape {
        input: 16,
        hidden: 32,
        code: 16,
    };
    let xr = gaussian(6, 16, 0.0, 60);
    let xw = gaussian(6, 16, 0.8, 61);
    let xh = gaussian(5, 16, -0.4, 62);
    let adv = grad_check_adversarial(&AlignModel::adversarial(shape, true, 5), &xr, &xw, 0.6, 1e-4).unwrap();
    let per = AlignModel::per_domain(shape, &[Domain::R, Domain::W, Domain::H], 6);
    let syn = [
        SyntheticBatch {
            domain: Domain::W,
            x: &xw,
            weight: 0.5,
        },
        SyntheticBatch {
            domain: Domain::H,
            x: &xh,
            weight: 0.5,
        },
    ];
    let mm = grad_check_mmd(&per, &xr, &syn, &KernelConfig::default(), 1e-4).unwrap();

    let model = AlignModel::adversarial(shape, true, 7);
    let alpha = 0.43;
    let plain = GrlWeights {
        recon: 0.0,
        head: 1.0,
        encoder: 1.0,
    };
    let (_, _, g0) = adversarial_gradients(&model, &xr, &xw, plain).unwrap();
    let (_, _, g1) = adversarial_gradients(&model, &xr, &xw, GrlWeights { encoder: -alpha, ..plain }).unwrap();
    let mut exact = true;
    let mut nonzero = false;
    for (i, name) in model.params.names().iter().enumerate() {
        if name.contains(".enc") {
            for (u, v) in g0.tensor(i).iter().zip(g1.tensor(i)) {
                exact &= *v == -alpha * u;
                nonzero |= *u != 0.0;
            }
        }
    }
    check(
        adv.max_rel_error < 1e-4 && mm.max_rel_error < 1e-4 && exact && nonzero,
        format!(
            "adversarial max rel {:.1e} ({} checked), mmd max rel {:.1e} ({} checked), reversal exact {exact}",
            adv.max_rel_error, adv.checked, mm.max_rel_error, mm.checked
        ),
    )
}

fn mmd_alignment_effect() -> Outcome {
    let ctx = SceneContext::shipped();
    let cfg = ExperimentConfig {
        real_train_scenes: 150,
        synthetic_scenes: 150,
        real_test_scenes: 1,
        ..ExperimentConfig::default()
    };
    let data = build_experiment_data(&ctx, &cfg, 7, Exec::Parallel).unwrap();
    let rows = |s: &FeatureStore| {
        Matrix::from_f32_rows(s.records().iter().flat_map(|r| r.regions.iter().map(|g| g.feature.as_slice()))).unwrap()
    };
    let (xr, xw) = (rows(&data.real.store), rows(&data.synthetic.store));
    let mut ac = AlignConfig::mmd_default();
    ac.shape.input = xr.cols;
    let mut model = AlignModel::per_domain(ac.shape, &[Domain::R, Domain::W], 7);
    let k = KernelConfig::default();
    let encoded = |m: &AlignModel| mmd(&m.encode(Domain::R, &xr).unwrap(), &m.encode(Domain::W, &xw).unwrap(), &k).unwrap();
    let before = encoded(&model);
    train_mmd_alignment(&mut model, &xr, Some(&xw), None, &ac, 200, 7).unwrap();
    let after = encoded(&model);
    check(
        after <= 0.5 * before,
        format!("{} real and {} synthetic regions, encoded mmd {before:.4} -> {after:.4} ({:.1}%)", xr.rows, xw.rows, 100.0 * after / before),
    )
}

/// Criteria 8 and 9 share one run: simple augmentation, feature swapping
/// and the real-only baseline over five seeds.
fn transfer() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        methods: vec![Method::Simple, Method::Fswap],
        ..ExperimentConfig::default()
    };
    let res = match run_experiment(&SceneContext::shipped(), &cfg, 0, Exec::Parallel) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let secs = start.elapsed().as_secs_f64();
    eprintln!("{}", res.table());
    let base = res.summary(None).unwrap();
    let simple = res.summary(Some(Method::Simple)).unwrap();
    let swap = res.summary(Some(Method::Fswap)).unwrap();
    let gain = swap.numeric - simple.numeric;
    let loss = simple.others - swap.others;
    let lift = simple.numeric - base.numeric;
    (
        check(
            gain >= 2.0 && loss < 1.0,
            format!(
                "numeric {:.2} -> {:.2} ({gain:+.2}), others {:.2} -> {:.2} ({:+.2}), 5 seeds, {secs:.0}s for 15 trainings",
                simple.numeric, swap.numeric, simple.others, swap.others, -loss
            ),
        ),
        check(lift >= 10.0, format!("numeric real-only {:.2} -> with synthetic {:.2} ({lift:+.2})", base.numeric, simple.numeric)),
    )
}

fn run_twice(cfg: &PipelineConfig, commands: &[Command], a: &Path, b: &Path) -> Vec<String> {
    for c in commands {
        pipeline::run(*c, cfg, a, Exec::Parallel).unwrap();
        pipeline::run(*c, cfg, b, Exec::Sequential).unwrap();
    }
    commands
        .iter()
        .filter(|c| hash_tree(&a.join(c.dir())).unwrap() != hash_tree(&b.join(c.dir())).unwrap())
        .map(|c| c.as_str().to_string())
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut cfg = PipelineConfig {
        seed: 21,
        scenes: 24,
        domain: Domain::R,
        ..PipelineConfig::default()
    };
    let mut differing = run_twice(&cfg, &[Command::Generate, Command::Qa, Command::Features], &a, &b);

    // each tree trains on its own inputs
    for (out, name) in [(&a, "ta"), (&b, "tb")] {
        let mut c = cfg.clone();
        c.train.sets = vec![DatasetRef {
            domain: Domain::R,
            qa: out.join("qa/triplets.jsonl"),
            features: out.join("features"),
        }];
        c.train.method = Method::Simple;
        c.train.config.epochs = 3;
        pipeline::run(Command::Train, &c, &tmp.path().join(name), Exec::Parallel).unwrap();
    }
    let strip = |p: &Path| {
        let mut t = hash_tree(&p.join("model")).unwrap();
        // the manifest records the input paths, which differ by construction
        t.remove("manifest.json");
        t
    };
    if strip(&tmp.path().join("ta")) != strip(&tmp.path().join("tb")) {
        differing.push("train".into());
    }

    cfg.experiment = ExperimentConfig {
        real_train_scenes: 10,
        synthetic_scenes: 10,
        real_test_scenes: 5,
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };
    cfg.experiment.train.epochs = 2;
    cfg.experiment.train.align_steps = 3;
    differing.extend(run_twice(&cfg, &[Command::Experiment], &a, &b));
    check(differing.is_empty(), format!("generate, qa, features, train, experiment; differing: {differing:?}"))
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "geometry identities and fixtures", geometry_suite()),
        (2, "placement round-trip", placement_round_trip()),
        (3, "QA soundness", qa_soundness()),
        (4, "feature swapping contract", fswap_contract()),
        (5, "MMD correctness", mmd_correctness()),
        (6, "gradient fidelity", gradient_fidelity()),
        (7, "MMD alignment effect", mmd_alignment_effect()),
    ];
    let (eight, nine) = transfer();
    results.push((8, "directional transfer", eight));
    results.push((9, "skill transfer", nine));
    results.push((10, "determinism", determinism()));

    let mut failed = 0;
    for (n, name, r) in &results {
        match r {
            Ok(d) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
        }
    }
    println!("{} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
