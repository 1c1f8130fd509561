use proptest::prelude::*;

use synthvqa::align::{mmd, KernelConfig, Matrix};
use synthvqa::compositor::{generate_scene, SceneContext};
use synthvqa::features::{build_dictionary, decode_record, encode_record, fswap, FeatureRecord, FeatureStore, Region, SwapConfig, SwapSource};
use synthvqa::geometry::{pairwise_geometry, place_object, CameraConfig, PlacementRequest, Position};
use synthvqa::pipeline::PipelineConfig;
use synthvqa::qa::{read_jsonl, write_jsonl, Grammar, QType, QaGenerator};
use synthvqa::Domain;

fn position() -> impl Strategy<Value = Position> {
    (-100.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(x, y, z)| Position::new(x, y, z))
}

const LABELS: [&str; 4] = ["cup", "chair", "lamp", "vase"];

fn record(domain: Domain, dim: usize) -> impl Strategy<Value = FeatureRecord> {
    prop::collection::vec((prop::collection::vec(-10.0f32..10.0, dim), 0..LABELS.len(), 0.0f32..1.0), 1..20).prop_map(
        move |rows| FeatureRecord {
            image_id: "img".into(),
            domain,
            regions: rows
                .into_iter()
                .map(|(feature, l, score)| Region {
                    feature,
                    pseudo_label: LABELS[l].into(),
                    score,
                })
                .collect(),
        },
    )
}

proptest! {
    #[test]
    fn geometry_is_antisymmetric(a in position(), b in position()) {
        prop_assume!(a.distance(&b) > 1e-6);
        let ab = pairwise_geometry(a, b).unwrap();
        let ba = pairwise_geometry(b, a).unwrap();
        prop_assert!((ab.d - ba.d).abs() < 1e-9);
        prop_assert!((ab.p + ba.p).abs() < 1e-9);
        prop_assert!((0.0..360.0).contains(&ab.a));
        let gap = (ab.a - (ba.a + 180.0).rem_euclid(360.0)).abs();
        prop_assert!(gap.min(360.0 - gap) < 1e-9);
    }

    #[test]
    fn placement_keeps_distance_and_height(
        x in -10.0..10.0f64, z in -10.0..10.0f64, yaw in 0.0..360.0f64, floor in -1.0..1.0f64,
        r in 0.1..20.0f64, off in -30.0..30.0f64, h in 0.0..2.0f64,
    ) {
        let cam = CameraConfig::new(x, 1.6, z, yaw, floor);
        let p = place_object(&cam, &PlacementRequest { r, theta: yaw + off, h }).unwrap();
        prop_assert!(((p.x - x).hypot(p.z - z) - r).abs() < 1e-9);
        prop_assert!((p.y - floor - h).abs() < 1e-12);
    }

    #[test]
    fn feature_files_round_trip_bitwise(rec in record(Domain::R, 5)) {
        let bytes = encode_record(&rec).unwrap();
        prop_assert_eq!(decode_record(&bytes, "p").unwrap(), rec.clone());
        // any truncation is rejected
        prop_assert!(decode_record(&bytes[..bytes.len() - 1], "p").is_err());
    }

    #[test]
    fn swapping_keeps_labels_and_count(rec in record(Domain::R, 3), src in record(Domain::W, 3), lambda in 0.0..=1.0f64, seed: u64) {
        let store = FeatureStore::new(vec![src]).unwrap();
        let dict = build_dictionary(&store, Domain::W);
        let source = SwapSource::new(vec![(&dict, &store)]).unwrap();
        let cfg = SwapConfig { lambda, seed, sources: vec![Domain::W] };
        let out = fswap(&rec, &source, &cfg);
        prop_assert_eq!(out.labels(), rec.labels());
        let matched = rec.regions.iter().filter(|g| source.count(&g.pseudo_label) > 0).count();
        let touched = rec.regions.iter().zip(&out.regions).filter(|(a, b)| a.feature != b.feature).count();
        // a swap may land on an identical feature, never on more than the budget
        prop_assert!(touched <= cfg.swap_count(rec.regions.len(), matched));
    }

    #[test]
    fn mmd_is_symmetric_and_non_negative(
        xs in prop::collection::vec(-3.0..3.0f64, 8..40),
        ys in prop::collection::vec(-3.0..3.0f64, 8..40),
    ) {
        let x = Matrix::from_vec(xs.len() / 2, 2, xs[..xs.len() / 2 * 2].to_vec()).unwrap();
        let y = Matrix::from_vec(ys.len() / 2, 2, ys[..ys.len() / 2 * 2].to_vec()).unwrap();
        let k = KernelConfig::default();
        let xy = mmd(&x, &y, &k).unwrap();
        prop_assert_eq!(xy, mmd(&y, &x, &k).unwrap());
        prop_assert!(xy >= -1e-12);
    }

    #[test]
    fn config_survives_a_toml_round_trip(seed: u64, scenes in 1usize..5000, frac in 0.0..=1.0f64, lambda in 0.0..=1.0f64) {
        let mut cfg = PipelineConfig { seed, scenes, max_dropped_fraction: frac, ..PipelineConfig::default() };
        cfg.swap.lambda = lambda;
        let text = toml::to_string(&cfg).unwrap();
        prop_assert_eq!(PipelineConfig::from_toml_str(&text, "p").unwrap(), cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_questions_parse_and_persist(seed: u64, pick in 0usize..64) {
        let ctx = SceneContext::shipped();
        let ids = ctx.templates.ids();
        let template = ids[pick % ids.len()];
        let Ok(g) = generate_scene(&ctx, template, "p", seed) else {
            return Ok(());
        };
        let gen = QaGenerator::new(Grammar::from_library(&ctx.library).unwrap(), Domain::W);
        let items = gen.generate_bound("p", &g.graph, &g.report, &QType::ALL, seed).unwrap();
        for st in &items {
            prop_assert_eq!(&gen.grammar.parse(&st.triplet.question).unwrap(), &st.bindings);
            if st.triplet.qtype == QType::Counting {
                let noun = st.bindings.noun.as_deref().unwrap();
                prop_assert_eq!(st.triplet.answer.clone(), g.report.count(noun).to_string());
            }
        }
        let triplets: Vec<_> = items.into_iter().map(|s| s.triplet).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_jsonl(&path, &triplets).unwrap();
        prop_assert_eq!(read_jsonl(&path).unwrap(), triplets);
    }
}
