//! Batch orchestration behind the command-line tool. Each command runs
//! one stage into a staging directory, writes a manifest, and only then
//! moves the result to `<out>/<stage dir>`. A failing stage's partial
//! output lands in `<out>/quarantine/<stage dir>` instead.

mod config;
mod manifest;
mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::{
    DatasetRef, DictStage, EvalStage, FeatureStage, MmdStage, PipelineConfig, Profiles, QaStage, SwapSourcePaths,
    SwapStage, TrainStage,
};
pub use manifest::{hash_tree, list_files, sha256_hex, Manifest};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Generate,
    Qa,
    Features,
    Dict,
    Swap,
    Mmd,
    Train,
    Eval,
    Experiment,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::Generate,
        Command::Qa,
        Command::Features,
        Command::Dict,
        Command::Swap,
        Command::Mmd,
        Command::Train,
        Command::Eval,
        Command::Experiment,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Command::Generate => "generate",
            Command::Qa => "qa",
            Command::Features => "features",
            Command::Dict => "dict",
            Command::Swap => "swap",
            Command::Mmd => "mmd",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Experiment => "experiment",
        }
    }

    /// Directory under `<out>` holding this stage's artifacts.
    pub fn dir(self) -> &'static str {
        match self {
            Command::Generate => "scenes",
            Command::Qa => "qa",
            Command::Features => "features",
            Command::Dict => "dict",
            Command::Swap => "swapped",
            Command::Mmd => "mmd",
            Command::Train => "model",
            Command::Eval => "eval",
            Command::Experiment => "experiment",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "command",
                name: s.to_string(),
            })
    }
}

/// Per-stage seed split off the master seed.
pub fn stage_seed(master: u64, command: Command) -> u64 {
    rng::derive_seed(master, command.as_str(), 0)
}

pub fn config_hash(cfg: &PipelineConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("config serializes"))
}

/// What a stage hands back besides the files it wrote.
pub(crate) struct StageOutput {
    /// Input label → file or directory read.
    pub inputs: Vec<(String, PathBuf)>,
    pub summary: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    pub command: &'static str,
    pub dir: PathBuf,
    pub summary: serde_json::Value,
}

/// Hashes an input: a file directly, a stage directory through its
/// manifest, any other directory file by file.
fn hash_input(label: &str, path: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
    if path.is_file() {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        out.insert(label.to_string(), sha256_hex(&bytes));
    } else if path.join("manifest.json").is_file() {
        hash_input(&format!("{label}/manifest.json"), &path.join("manifest.json"), out)?;
    } else {
        for (name, h) in hash_tree(path)? {
            out.insert(format!("{label}/{name}"), h);
        }
    }
    Ok(())
}

fn move_dir(from: &Path, to: &Path) -> Result<()> {
    if to.exists() {
        std::fs::remove_dir_all(to).map_err(|e| Error::io(to, e))?;
    }
    if let Some(parent) = to.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::rename(from, to).map_err(|e| Error::io(from, e))
}

/// Runs `command` and publishes its artifacts under `out`.
pub fn run(command: Command, cfg: &PipelineConfig, out: &Path, exec: Exec) -> Result<RunOutcome> {
    cfg.validate()?;
    let staging = out.join(".staging").join(command.dir());
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let seed = stage_seed(cfg.seed, command);

    let result = stages::run_stage(command, cfg, out, &staging, seed, exec).and_then(|o| {
        let mut inputs = BTreeMap::new();
        for (label, p) in &o.inputs {
            hash_input(label, p, &mut inputs)?;
        }
        let manifest = Manifest {
            stage: command.as_str().to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(cfg),
            master_seed: cfg.seed,
            stage_seed: seed,
            config: serde_json::to_value(cfg).expect("config serializes"),
            inputs,
            files: hash_tree(&staging)?,
            summary: o.summary,
        };
        let path = staging.join("manifest.json");
        std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
        Ok(manifest.summary)
    });

    match result {
        Ok(summary) => {
            let dir = out.join(command.dir());
            move_dir(&staging, &dir)?;
            let _ = std::fs::remove_dir(out.join(".staging"));
            Ok(RunOutcome {
                command: command.as_str(),
                dir,
                summary,
            })
        }
        Err(e) => {
            let q = out.join("quarantine").join(command.dir());
            if move_dir(&staging, &q).is_ok() {
                let record = serde_json::json!({ "command": command.as_str(), "error": e.kind(), "message": e.to_string() });
                let _ = std::fs::write(q.join("error.json"), serde_json::to_string_pretty(&record).unwrap_or_default());
            }
            let _ = std::fs::remove_dir(out.join(".staging"));
            Err(e)
        }
    }
}

#[cfg(test)]
mod tests;
