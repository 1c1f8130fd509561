use super::*;
use std::path::PathBuf;

#[test]
fn commands_round_trip_and_own_distinct_dirs() {
    let mut dirs = std::collections::BTreeSet::new();
    for c in Command::ALL {
        assert_eq!(c.as_str().parse::<Command>().unwrap(), c);
        assert!(dirs.insert(c.dir()), "{c:?}");
    }
    assert!("render".parse::<Command>().is_err());
}

#[test]
fn stage_seeds_differ_per_command() {
    let seeds: std::collections::BTreeSet<u64> = Command::ALL.iter().map(|&c| stage_seed(7, c)).collect();
    assert_eq!(seeds.len(), Command::ALL.len());
    assert_eq!(stage_seed(7, Command::Qa), stage_seed(7, Command::Qa));
    assert_ne!(stage_seed(7, Command::Qa), stage_seed(8, Command::Qa));
}

#[test]
fn unknown_keys_are_rejected() {
    let err = PipelineConfig::from_toml_str("[qa]\nscenes = \"x\"\nmixx = 1\n", "c.toml").unwrap_err();
    assert_eq!(err.kind(), "format");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn out_of_range_values_are_config_errors() {
    for text in ["max_dropped_fraction = 1.5\n", "[swap]\nlambda = -0.1\n", "[mmd]\nlevel = 1.0\n", "[features]\nn_max = 0\n"] {
        let err = PipelineConfig::from_toml_str(text, "c.toml").unwrap_err();
        assert_eq!(err.kind(), "config", "{text}");
    }
}

#[test]
fn load_rebases_relative_paths_only() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    std::fs::write(
        &path,
        "[swap]\ninput = \"feats\"\n\n[[train.sets]]\ndomain = \"R\"\nqa = \"/abs/q.jsonl\"\nfeatures = \"f\"\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg.swap.input, Some(tmp.path().join("feats")));
    assert_eq!(cfg.train.sets[0].qa, PathBuf::from("/abs/q.jsonl"));
    assert_eq!(cfg.train.sets[0].features, tmp.path().join("f"));
}

#[test]
fn config_hash_tracks_content() {
    let a = PipelineConfig::default();
    assert_eq!(config_hash(&a), config_hash(&a.clone()));
    assert_eq!(config_hash(&a).len(), 64);
    let b = PipelineConfig { seed: 1, ..a.clone() };
    assert_ne!(config_hash(&a), config_hash(&b));
}

#[test]
fn failed_stage_lands_in_quarantine() {
    let tmp = tempfile::tempdir().unwrap();
    // qa without scenes to read
    let err = run(Command::Qa, &PipelineConfig::default(), tmp.path(), Exec::Sequential).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!tmp.path().join("qa").exists());
    assert!(!tmp.path().join(".staging").exists());
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("quarantine/qa/error.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "qa");
}

#[test]
fn manifest_lists_every_file_it_sits_beside() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig {
        scenes: 3,
        ..PipelineConfig::default()
    };
    run(Command::Generate, &cfg, tmp.path(), Exec::Sequential).unwrap();
    let dir = tmp.path().join("scenes");
    let m = Manifest::load(&dir.join("manifest.json")).unwrap();
    let mut on_disk = hash_tree(&dir).unwrap();
    on_disk.remove("manifest.json");
    assert_eq!(m.files, on_disk);
    assert_eq!(m.stage_seed, stage_seed(0, Command::Generate));
}
