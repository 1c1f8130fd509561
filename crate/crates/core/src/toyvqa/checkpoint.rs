use std::path::Path;

use serde::{Deserialize, Serialize};

use super::answers::AnswerSpace;
use super::model::{ModelShape, ToyModel};
use super::train::{CodeNorm, Method, Trained};
use crate::align::{AeShape, AlignModel, ParamSet};
use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AlignerLayout {
    shape: AeShape,
    domains: Vec<Domain>,
    domain_head: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelMeta {
    method: Method,
    shape: ModelShape,
    /// Question words in vocabulary-index order.
    words: Vec<String>,
    answers: AnswerSpace,
    aligner: Option<AlignerLayout>,
    #[serde(default)]
    code_norm: Option<CodeNorm>,
}

/// Writes `model.json`, `model.svqc`, and `aligner.svqc` when the method
/// trained one.
pub fn save_trained(dir: &Path, trained: &Trained) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &trained.model;
    let mut words: Vec<(&String, &usize)> = m.vocab.iter().collect();
    words.sort_by_key(|(_, &i)| i);
    let meta = ModelMeta {
        method: trained.method,
        shape: m.shape,
        words: words.into_iter().map(|(w, _)| w.clone()).collect(),
        answers: m.answers.clone(),
        aligner: trained.aligner.as_ref().map(|a| AlignerLayout {
            shape: a.shape,
            domains: a.autoencoders.iter().map(|(d, _)| *d).collect(),
            domain_head: a.head.is_some(),
        }),
        code_norm: trained.code_norm.clone(),
    };
    let path = dir.join("model.json");
    let json = serde_json::to_string_pretty(&meta).expect("model metadata serializes");
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    m.params.save(&dir.join("model.svqc"))?;
    if let Some(a) = &trained.aligner {
        a.params.save(&dir.join("aligner.svqc"))?;
    }
    Ok(())
}

/// Inverse of [`save_trained`]. Loss history is not stored and comes back
/// empty.
pub fn load_trained(dir: &Path) -> Result<Trained> {
    let path = dir.join("model.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ModelMeta =
        serde_json::from_str(&text).map_err(|e| Error::format(&path.display().to_string(), e.line(), e.to_string()))?;
    let mut model = ToyModel::new(meta.shape, meta.words, meta.answers, 0);
    model.params.assign(&ParamSet::load(&dir.join("model.svqc"))?)?;
    let aligner = match meta.aligner {
        None => None,
        Some(layout) => {
            let mut a = if layout.domain_head {
                AlignModel::adversarial(layout.shape, layout.domains.len() > 1, 0)
            } else {
                AlignModel::per_domain(layout.shape, &layout.domains, 0)
            };
            a.params.assign(&ParamSet::load(&dir.join("aligner.svqc"))?)?;
            Some(a)
        }
    };
    Ok(Trained {
        method: meta.method,
        model,
        aligner,
        code_norm: meta.code_norm,
        losses: Vec::new(),
    })
}
