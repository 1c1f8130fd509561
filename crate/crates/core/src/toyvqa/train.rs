use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::answers::{build_answer_space, DEFAULT_DI_TOKENS};
use super::model::{region_matrix, tokenize, Batch, ModelShape, ToyModel};
use crate::align::{train_adversarial, train_mmd_alignment, Adam, AdamConfig, AlignConfig, AlignModel, Matrix};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{build_dictionary, fswap, FeatureDict, FeatureRecord, FeatureStore, Region, SwapConfig, SwapSource};
use crate::qa::{QATriplet, QType};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Simple,
    Fswap,
    Mmd,
    Adversarial,
    DomainIndependent,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Simple,
        Method::Fswap,
        Method::Mmd,
        Method::Adversarial,
        Method::DomainIndependent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Simple => "simple",
            Method::Fswap => "fswap",
            Method::Mmd => "mmd",
            Method::Adversarial => "adversarial",
            Method::DomainIndependent => "domain-independent",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Lookup {
                kind: "method",
                name: s.to_string(),
            })
    }
}

/// Questions and the feature records they ask about, from one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub domain: Domain,
    pub triplets: Vec<QATriplet>,
    pub store: FeatureStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub embed_dim: usize,
    pub hidden: usize,
    pub n_max: usize,
    pub lambda: f64,
    pub di_tokens: usize,
    /// Autoencoder updates before VQA training, for the alignment methods.
    pub align_steps: usize,
    pub align_mmd: AlignConfig,
    pub align_adversarial: AlignConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            batch_size: 64,
            optimizer: AdamConfig {
                lr: 1e-2,
                beta1: 0.9,
                beta2: 0.98,
                eps: 1e-9,
                weight_decay: 0.0,
            },
            embed_dim: 32,
            hidden: 64,
            n_max: 25,
            lambda: 0.2,
            di_tokens: DEFAULT_DI_TOKENS,
            align_steps: 2000,
            align_mmd: AlignConfig::mmd_default(),
            align_adversarial: AlignConfig::adversarial_default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.embed_dim == 0 || self.hidden == 0 || self.n_max == 0 {
            return Err(Error::Config("epochs, batch size, widths and n_max must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        self.optimizer.validate()?;
        self.align_mmd.validate()?;
        self.align_adversarial.validate()
    }
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub method: Method,
    pub model: ToyModel,
    /// Encoder applied to features before the model, for alignment methods.
    pub aligner: Option<AlignModel>,
    /// Standardization of the aligner's codes; present with the aligner.
    pub code_norm: Option<CodeNorm>,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

impl Trained {
    /// Features as the model sees them.
    pub fn prepare(&self, store: &FeatureStore) -> Result<FeatureStore> {
        match &self.aligner {
            Some(a) => encode_store(a, self.code_norm.as_ref(), store),
            None => Ok(store.clone()),
        }
    }
}

/// Per-dimension shift and scale bringing the encoded real training
/// features to zero mean and unit variance. Adversarially trained encoders
/// in particular drift to large code magnitudes that would otherwise swamp
/// the classifier's first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CodeNorm {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f32]>) -> Result<Self> {
        let x = Matrix::from_f32_rows(rows)?;
        if x.rows == 0 {
            return Err(Error::Validation("no encoded real features to standardize".into()));
        }
        let n = x.rows as f64;
        let mut mean = vec![0.0; x.cols];
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v / n;
            }
        }
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        // constant (e.g. dead relu) dimensions are only centered
        let scale = var.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, scale })
    }

    fn apply(&self, code: &[f64]) -> Vec<f32> {
        code.iter().zip(&self.mean).zip(&self.scale).map(|((c, m), s)| ((c - m) * s) as f32).collect()
    }
}

fn rows_of(store: &FeatureStore, domain: Option<Domain>) -> Result<Matrix> {
    let rows: Vec<&[f32]> = store
        .records()
        .iter()
        .filter(|r| domain.is_none_or(|d| r.domain == d))
        .flat_map(|r| r.regions.iter().map(|g| g.feature.as_slice()))
        .collect();
    Matrix::from_f32_rows(rows)
}

/// Replaces every region feature by its code under the record's domain,
/// standardized by `norm` when given.
pub fn encode_store(model: &AlignModel, norm: Option<&CodeNorm>, store: &FeatureStore) -> Result<FeatureStore> {
    let records = store
        .records()
        .iter()
        .map(|rec| {
            let x = Matrix::from_f32_rows(rec.regions.iter().map(|g| g.feature.as_slice()))?;
            let code = model.encode(rec.domain, &x)?;
            Ok(FeatureRecord {
                image_id: rec.image_id.clone(),
                domain: rec.domain,
                regions: rec
                    .regions
                    .iter()
                    .enumerate()
                    .map(|(i, g)| Region {
                        feature: match norm {
                            Some(n) => n.apply(code.row(i)),
                            None => code.row(i).iter().map(|&v| v as f32).collect(),
                        },
                        pseudo_label: g.pseudo_label.clone(),
                        score: g.score,
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureStore::new(records)
}

fn fit_aligner(sets: &[TrainSet], method: Method, cfg: &TrainConfig, seed: u64) -> Result<Option<AlignModel>> {
    let pool = |d: Domain| -> Result<Option<Matrix>> {
        let rows: Vec<Matrix> = sets
            .iter()
            .filter(|s| s.domain == d)
            .map(|s| rows_of(&s.store, Some(d)))
            .collect::<Result<_>>()?;
        let all: Vec<Vec<f64>> = rows.iter().flat_map(|m| (0..m.rows).map(|i| m.row(i).to_vec())).collect();
        if all.is_empty() {
            Ok(None)
        } else {
            Matrix::from_rows(&all).map(Some)
        }
    };
    let xr = pool(Domain::R)?.ok_or_else(|| Error::Validation("alignment needs R features".into()))?;
    let (xw, xh) = (pool(Domain::W)?, pool(Domain::H)?);
    let s = rng::derive_seed(seed, "aligner", 0);
    match method {
        Method::Mmd => {
            let mut ac = cfg.align_mmd.clone();
            ac.shape.input = xr.cols;
            let domains: Vec<Domain> = [Some(Domain::R), xw.as_ref().map(|_| Domain::W), xh.as_ref().map(|_| Domain::H)]
                .into_iter()
                .flatten()
                .collect();
            let mut m = AlignModel::per_domain(ac.shape, &domains, s);
            train_mmd_alignment(&mut m, &xr, xw.as_ref(), xh.as_ref(), &ac, cfg.align_steps, s)?;
            Ok(Some(m))
        }
        Method::Adversarial => {
            let mut ac = cfg.align_adversarial.clone();
            ac.shape.input = xr.cols;
            let synth: Vec<Vec<f64>> = [xw, xh]
                .iter()
                .flatten()
                .flat_map(|m| (0..m.rows).map(|i| m.row(i).to_vec()).collect::<Vec<_>>())
                .collect();
            let xs = Matrix::from_rows(&synth)?;
            if xs.is_empty() {
                return Err(Error::Validation("adversarial alignment needs synthetic features".into()));
            }
            let mut m = AlignModel::adversarial(ac.shape, true, s);
            train_adversarial(&mut m, &xr, &xs, &ac, cfg.align_steps, s)?;
            Ok(Some(m))
        }
        _ => Ok(None),
    }
}

/// Answers the real domain can have, plus the question vocabulary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Vocabulary {
    pub real_answers: Vec<String>,
    pub words: Vec<String>,
}

impl Vocabulary {
    /// Real answers and words drawn from every triplet given (for the real
    /// side, typically the full question pool before any type is withheld).
    pub fn from_triplets<'a>(real: impl IntoIterator<Item = &'a QATriplet>, all: impl IntoIterator<Item = &'a QATriplet>) -> Self {
        let mut real_answers: Vec<String> = real.into_iter().map(|t| t.answer.clone()).collect();
        real_answers.sort();
        real_answers.dedup();
        let mut words: Vec<String> = all.into_iter().flat_map(|t| tokenize(&t.question)).collect();
        words.sort();
        words.dedup();
        Self { real_answers, words }
    }
}

/// Questions about one record, as (target, word ids).
struct ImageQuestions<'a> {
    record: &'a FeatureRecord,
    domain: Domain,
    regions: Matrix,
    questions: Vec<(usize, Vec<usize>)>,
}

/// Trains a fresh model on `sets` with `method`. Each epoch visits the
/// union of all images in a seeded order and fills a batch with whole
/// images until it holds at least `batch_size` questions, so each record's
/// regions are projected once per step. For `Fswap`, every R record first
/// passes through `fswap` against dictionaries built from the synthetic
/// sets, re-seeded each epoch.
pub fn train(sets: &[TrainSet], vocab: &Vocabulary, method: Method, cfg: &TrainConfig, seed: u64) -> Result<Trained> {
    cfg.validate()?;
    if sets.iter().all(|s| s.triplets.is_empty()) {
        return Err(Error::Validation("no training questions".into()));
    }
    let aligner = fit_aligner(sets, method, cfg, seed)?;
    let code_norm = match &aligner {
        Some(a) => {
            let real: Vec<FeatureStore> = sets
                .iter()
                .filter(|s| s.domain == Domain::R)
                .map(|s| encode_store(a, None, &s.store))
                .collect::<Result<_>>()?;
            let rows = real.iter().flat_map(|s| s.records()).flat_map(|r| r.regions.iter().map(|g| g.feature.as_slice()));
            Some(CodeNorm::fit(rows)?)
        }
        None => None,
    };
    let stores: Vec<FeatureStore> = sets
        .iter()
        .map(|s| match &aligner {
            Some(a) => encode_store(a, code_norm.as_ref(), &s.store),
            None => Ok(s.store.clone()),
        })
        .collect::<Result<_>>()?;

    let synthetic: Vec<String> = sets
        .iter()
        .filter(|s| s.domain != Domain::R)
        .flat_map(|s| s.triplets.iter().map(|t| t.answer.clone()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut real = vocab.real_answers.clone();
    real.extend(sets.iter().filter(|s| s.domain == Domain::R).flat_map(|s| s.triplets.iter().map(|t| t.answer.clone())));
    let answers = build_answer_space(&real, &synthetic, method == Method::DomainIndependent, cfg.di_tokens)?;

    let feature_dim = stores.iter().map(FeatureStore::dim).find(|&d| d > 0).unwrap_or(0);
    let shape = ModelShape {
        feature_dim,
        embed_dim: cfg.embed_dim,
        hidden: cfg.hidden,
        n_max: cfg.n_max,
    };
    let mut model = ToyModel::new(shape, vocab.words.iter().cloned(), answers, rng::derive_seed(seed, "toy-model", 0));

    let mut images: Vec<ImageQuestions> = Vec::new();
    for (set, store) in sets.iter().zip(&stores) {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &set.triplets {
            let target = model.answers.target(&t.answer, set.domain).ok_or_else(|| Error::Lookup {
                kind: "answer",
                name: t.answer.clone(),
            })?;
            let k = match index.get(t.image_id.as_str()) {
                Some(&k) => k,
                None => {
                    let record = store.get(&t.image_id).ok_or_else(|| Error::Lookup {
                        kind: "feature record",
                        name: t.image_id.clone(),
                    })?;
                    images.push(ImageQuestions {
                        record,
                        domain: set.domain,
                        regions: region_matrix(record, cfg.n_max)?,
                        questions: Vec::new(),
                    });
                    index.insert(&record.image_id, images.len() - 1);
                    images.len() - 1
                }
            };
            images[k].questions.push((target, model.words(&t.question)));
        }
    }

    let dicts: Vec<(FeatureDict, &FeatureStore)> = if method == Method::Fswap {
        sets.iter()
            .zip(&stores)
            .filter(|(s, _)| s.domain != Domain::R)
            .map(|(s, st)| (build_dictionary(st, s.domain), st))
            .collect()
    } else {
        Vec::new()
    };
    let source = SwapSource::new(dicts.iter().map(|(d, s)| (d, *s)).collect())?;

    let mut opt = Adam::new(cfg.optimizer.clone(), &model.params);
    let mut order: Vec<usize> = (0..images.len()).collect();
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(seed, "toy-epoch", epoch as u64));
        let swap = SwapConfig {
            lambda: cfg.lambda,
            seed: rng::derive_seed(seed, "fswap-epoch", epoch as u64),
            sources: vec![Domain::W, Domain::H],
        };
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut questions = 0;
            while end < order.len() && questions < cfg.batch_size {
                questions += images[order[end]].questions.len();
                end += 1;
            }
            let chunk = &order[start..end];
            start = end;
            let swapped: Vec<Option<Matrix>> = chunk
                .iter()
                .map(|&k| {
                    let img = &images[k];
                    if method == Method::Fswap && img.domain == Domain::R {
                        region_matrix(&fswap(img.record, &source, &swap), cfg.n_max).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            let mut batch = Batch::default();
            let mut targets = Vec::with_capacity(questions);
            for (j, (&k, sw)) in chunk.iter().zip(&swapped).enumerate() {
                let img = &images[k];
                batch.records.push(sw.as_ref().unwrap_or(&img.regions));
                for (target, words) in &img.questions {
                    batch.items.push((j, words));
                    targets.push(*target);
                }
            }
            let (loss, grads) = model.loss_and_grads(&batch, &targets)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence {
                    term: "L_vqa".into(),
                    step: losses.len(),
                });
            }
            opt.step(&mut model.params, &grads);
            losses.push(loss);
        }
    }
    Ok(Trained {
        method,
        model,
        aligner,
        code_norm,
        losses,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitScore {
    pub correct: usize,
    pub total: usize,
    /// Percent.
    pub accuracy: f64,
}

impl SplitScore {
    fn new(correct: usize, total: usize) -> Option<Self> {
        (total > 0).then(|| Self {
            correct,
            total,
            accuracy: 100.0 * correct as f64 / total as f64,
        })
    }
}

/// Exact-match accuracy. Numeric is the counting type, Others the rest; an
/// empty split is `None` rather than zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub numeric: Option<SplitScore>,
    pub others: Option<SplitScore>,
    pub overall: Option<SplitScore>,
}

impl EvalReport {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (QType, bool)>) -> Self {
        let (mut nc, mut nt, mut oc, mut ot) = (0, 0, 0, 0);
        for (q, ok) in outcomes {
            if q == QType::Counting {
                nt += 1;
                nc += usize::from(ok);
            } else {
                ot += 1;
                oc += usize::from(ok);
            }
        }
        Self {
            numeric: SplitScore::new(nc, nt),
            others: SplitScore::new(oc, ot),
            overall: SplitScore::new(nc + oc, nt + ot),
        }
    }
}

/// Predicted answer for each triplet.
pub fn predict(trained: &Trained, triplets: &[QATriplet], store: &FeatureStore, exec: Exec) -> Result<Vec<String>> {
    let store = trained.prepare(store)?;
    let m = &trained.model;
    let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in triplets.iter().enumerate() {
        by_image.entry(&t.image_id).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_image.into_iter().collect();
    let answered = exec.try_map_range(groups.len(), |g| {
        let (id, idx) = &groups[g];
        let rec = store.get(id).ok_or_else(|| Error::Lookup {
            kind: "feature record",
            name: id.to_string(),
        })?;
        let regions = region_matrix(rec, m.shape.n_max)?;
        let words: Vec<Vec<usize>> = idx.iter().map(|&i| m.words(&triplets[i].question)).collect();
        let batch = Batch {
            records: vec![&regions],
            items: words.iter().map(|w| (0, w.as_slice())).collect(),
        };
        let logits = m.logits(&batch)?;
        Ok((0..idx.len())
            .map(|r| m.answers.token(m.answers.predict(logits.row(r), rec.domain)).to_string())
            .collect::<Vec<_>>())
    })?;
    let mut out = vec![String::new(); triplets.len()];
    for ((_, idx), preds) in groups.iter().zip(answered) {
        for (&i, p) in idx.iter().zip(preds) {
            out[i] = p;
        }
    }
    Ok(out)
}

pub fn evaluate(trained: &Trained, triplets: &[QATriplet], store: &FeatureStore, exec: Exec) -> Result<EvalReport> {
    let preds = predict(trained, triplets, store, exec)?;
    Ok(EvalReport::from_outcomes(
        triplets.iter().zip(&preds).map(|(t, p)| (t.qtype, *p == t.answer)),
    ))
}
