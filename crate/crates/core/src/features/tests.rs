use super::*;
use crate::compositor::{PlacedObject, PlacedScene, RenderConfig};
use crate::geometry::{CameraConfig, Position};
use crate::scene::SizeClass;

fn region(label: &str, v: f32) -> Region {
    Region {
        feature: vec![v; 4],
        pseudo_label: label.into(),
        score: 0.9,
    }
}

fn record(id: &str, domain: Domain, regions: Vec<Region>) -> FeatureRecord {
    FeatureRecord {
        image_id: id.into(),
        domain,
        regions,
    }
}

fn object(id: u32, category: &str, color: &str) -> PlacedObject {
    PlacedObject {
        instance_id: id,
        node_id: "A".into(),
        asset_id: format!("{category}_01"),
        category: category.into(),
        category_index: 1,
        color: color.into(),
        material: "wood".into(),
        size_class: SizeClass::MidRange,
        position: Position::new(3.0, 0.2, 0.0),
        extents: [0.4, 0.4, 0.4],
        support: None,
    }
}

fn scene(objects: Vec<PlacedObject>) -> PlacedScene {
    PlacedScene {
        scene_id: "s-1".into(),
        template_id: "t".into(),
        backdrop_id: "studio".into(),
        camera: CameraConfig::new(0.0, 1.5, 0.0, 0.0, 0.0),
        render: RenderConfig::default(),
        objects,
    }
}

#[test]
fn encode_decode_round_trip_is_bitwise() {
    let mut rec = record("img-7", Domain::W, vec![region("cup", 0.25), region("chair", -1.5)]);
    rec.regions[1].feature[2] = f32::MIN_POSITIVE;
    let bytes = encode_record(&rec).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    assert_eq!(decode_record(&bytes, "mem").unwrap(), rec);
}

#[test]
fn decode_rejects_corruption() {
    let rec = record("a", Domain::R, vec![region("cup", 1.0)]);
    let bytes = encode_record(&rec).unwrap();
    let mut wrong_magic = bytes.clone();
    wrong_magic[0] = b'X';
    assert!(matches!(decode_record(&wrong_magic, "m"), Err(Error::Format { .. })));
    assert!(matches!(decode_record(&bytes[..bytes.len() - 3], "m"), Err(Error::Format { .. })));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_record(&extra, "m").is_err());
    let mut version = bytes;
    version[4] = 9;
    assert!(decode_record(&version, "m").is_err());
}

#[test]
fn padding_keeps_rows_and_zero_fills() {
    let rec = record("a", Domain::R, vec![region("cup", 1.0), region("cup", 2.0)]);
    let p = pad_features(&rec, 5).unwrap();
    assert_eq!(p.valid, 2);
    assert_eq!(p.row(1), &[2.0; 4]);
    assert!(p.data[8..].iter().all(|&x| x == 0.0));
    assert!(matches!(
        pad_features(&rec, 1),
        Err(Error::Truncation { count: 2, n_max: 1 })
    ));
}

#[test]
fn store_rejects_duplicate_ids() {
    let a = record("a", Domain::R, vec![region("cup", 1.0)]);
    assert!(FeatureStore::new(vec![a.clone(), a]).is_err());
}

#[test]
fn dictionary_indexes_only_its_domain() {
    let store = FeatureStore::new(vec![
        record("w1", Domain::W, vec![region("cup", 1.0), region("bowl", 2.0)]),
        record("w2", Domain::W, vec![region("cup", 3.0)]),
        record("r1", Domain::R, vec![region("cup", 4.0)]),
    ])
    .unwrap();
    let d = build_dictionary(&store, Domain::W);
    assert_eq!(d.len(), 3);
    assert_eq!(d.get("cup").len(), 2);
    assert!(d.get("mug").is_empty());
    let empty = build_dictionary(&store, Domain::H);
    assert!(empty.is_empty());
}

#[test]
fn fswap_replaces_floor_lambda_m_matched_regions() {
    let w = FeatureStore::new(vec![record("w1", Domain::W, vec![region("cup", 9.0), region("cup", 8.0)])]).unwrap();
    let dict = build_dictionary(&w, Domain::W);
    let src = SwapSource::new(vec![(&dict, &w)]).unwrap();
    let regions: Vec<Region> = (0..10).map(|i| region(if i < 6 { "cup" } else { "bowl" }, i as f32)).collect();
    let real = record("r1", Domain::R, regions);
    let cfg = SwapConfig {
        lambda: 0.3,
        seed: 4,
        sources: vec![Domain::W],
    };
    let out = fswap(&real, &src, &cfg);
    let changed: Vec<usize> = (0..10).filter(|&i| out.regions[i].feature != real.regions[i].feature).collect();
    assert_eq!(changed.len(), 3);
    assert!(changed.iter().all(|&i| i < 6));
    for &i in &changed {
        assert!(out.regions[i].feature[0] >= 8.0);
    }
    assert_eq!(out.labels(), real.labels());
    assert_eq!(fswap(&real, &src, &cfg), out);

    // only two regions match, so no more than two can change
    let few = record("r2", Domain::R, (0..10).map(|i| region(if i < 2 { "cup" } else { "bowl" }, i as f32)).collect());
    let cfg = SwapConfig { lambda: 0.5, ..cfg };
    let out = fswap(&few, &src, &cfg);
    let n = (0..10).filter(|&i| out.regions[i].feature != few.regions[i].feature).count();
    assert_eq!(n, 2);
}

#[test]
fn swap_count_survives_float_rounding() {
    let cfg = SwapConfig::default();
    assert_eq!(cfg.swap_count(10, 10), 2);
    assert_eq!(cfg.swap_count(4, 10), 0);
    let cfg = SwapConfig { lambda: 0.7, ..cfg };
    assert_eq!(cfg.swap_count(10, 10), 7);
}

#[test]
fn swap_source_rejects_dangling_references() {
    let w = FeatureStore::new(vec![record("w1", Domain::W, vec![region("cup", 1.0)])]).unwrap();
    let mut dict = build_dictionary(&w, Domain::W);
    dict.entries.get_mut("cup").unwrap()[0].region = 5;
    assert!(SwapSource::new(vec![(&dict, &w)]).is_err());
}

#[test]
fn identity_profile_reproduces_the_base_embedding() {
    let p = DomainProfile::identity(Domain::R, 16);
    let s = scene(vec![object(1, "cup", "red")]);
    let rec = simulate_features(&s, &p, &["cup", "bowl"], 1).unwrap();
    let mut base = vec![0.0; 16];
    for (k, v) in [("category", "cup"), ("color", "red"), ("material", "wood"), ("size", "mid-range")] {
        for (b, e) in base.iter_mut().zip(embedding(k, v, 16)) {
            *b += e;
        }
    }
    let want: Vec<f32> = base.iter().map(|&x| x as f32).collect();
    assert_eq!(rec.regions[0].feature, want);
    assert_eq!(rec.regions[0].pseudo_label, "cup");
}

#[test]
fn rho_one_always_relabels() {
    let mut p = DomainProfile::identity(Domain::W, 8);
    p.rho = 1.0;
    let s = scene((1..=5).map(|i| object(i, "cup", "red")).collect());
    let rec = simulate_features(&s, &p, &["cup", "bowl", "vase"], 3).unwrap();
    assert!(rec.regions.iter().all(|r| r.pseudo_label != "cup"));
    assert!(rec.validate(DEFAULT_N_MAX).is_ok());
}

#[test]
fn profile_spec_is_seeded_and_validated() {
    let spec = ProfileSpec {
        dim: 8,
        mix: 0.5,
        offset: 2.0,
        ..ProfileSpec::default()
    };
    let a = spec.build(Domain::W).unwrap();
    assert_eq!(a, spec.build(Domain::W).unwrap());
    assert_ne!(a.matrix, spec.build(Domain::R).unwrap().matrix);
    let norm = a.offset.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 2.0).abs() < 1e-12);
    assert!(ProfileSpec { mix: 1.5, ..spec.clone() }.build(Domain::W).is_err());
    let mut bad = a;
    bad.sigma = -1.0;
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn embeddings_are_unit_and_distinct() {
    let a = embedding("category", "cup", 32);
    let b = embedding("category", "bowl", 32);
    assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_ne!(a, b);
    assert_eq!(a, embedding("category", "cup", 32));
}
