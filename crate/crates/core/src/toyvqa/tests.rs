use super::*;
use crate::align::{grad_check, Matrix};
use crate::domain::Domain;
use crate::exec::Exec;
use crate::features::{FeatureRecord, FeatureStore, Region};
use crate::qa::{QATriplet, QType, Split};

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

#[test]
fn domain_independent_space_duplicates_shared_answers() {
    let di = build_answer_space(&s(&["1", "2", "yes"]), &s(&["2", "red"]), true, 100).unwrap();
    assert_eq!(di.len(), 5);
    assert_eq!((0..5).filter(|&i| di.token(i) == "2").count(), 2);
    assert_eq!(di.target("2", Domain::R), Some(1));
    assert_eq!(di.target("2", Domain::W), Some(3));

    let plain = build_answer_space(&s(&["1", "2", "yes"]), &s(&["2", "red"]), false, 100).unwrap();
    assert_eq!(plain.len(), 4);
    assert_eq!(plain.target("red", Domain::W), plain.target("red", Domain::R));
}

#[test]
fn extension_budget_is_enforced() {
    let err = build_answer_space(&s(&["yes"]), &s(&["1", "2", "3"]), true, 2).unwrap_err();
    assert!(matches!(err, crate::error::Error::Capacity(_)));
    assert!(build_answer_space(&s(&["yes"]), &s(&["1", "2", "3"]), false, 2).is_ok());
}

#[test]
fn real_prediction_never_lands_on_an_extension_token() {
    let di = build_answer_space(&s(&["1", "2", "yes"]), &s(&["2", "red"]), true, 100).unwrap();
    // "red" (index 4) dominates but has no real twin; "2" gets its twin's mass
    let logits = [0.0, 1.0, 0.5, 2.0, 3.0];
    let i = di.predict(&logits, Domain::R);
    assert!(!di.is_extension(i));
    assert_eq!(di.token(i), "2");
    assert_eq!(di.token(di.predict(&logits, Domain::W)), "red");
}

fn outcome(q: QType, ok: bool, n: usize) -> impl Iterator<Item = (QType, bool)> {
    std::iter::repeat_n((q, ok), n)
}

#[test]
fn report_arithmetic() {
    // majority "yes" on a balanced yes/no set
    let r = EvalReport::from_outcomes(outcome(QType::Yesno, true, 20).chain(outcome(QType::Yesno, false, 20)));
    assert_eq!(r.others.unwrap().accuracy, 50.0);
    assert!(r.numeric.is_none());

    let r = EvalReport::from_outcomes(outcome(QType::Counting, true, 3).chain(outcome(QType::Color, true, 5)));
    assert_eq!(
        [r.numeric.unwrap().accuracy, r.others.unwrap().accuracy, r.overall.unwrap().accuracy],
        [100.0, 100.0, 100.0]
    );

    let outcomes: Vec<(QType, bool)> = (0..37)
        .map(|i| (if i % 3 == 0 { QType::Counting } else { QType::Material }, i % 4 != 1))
        .collect();
    let r = EvalReport::from_outcomes(outcomes.iter().copied());
    let (n, o) = (r.numeric.unwrap(), r.others.unwrap());
    let expected = (n.total as f64 * n.accuracy + o.total as f64 * o.accuracy) / (n.total + o.total) as f64;
    assert!((r.overall.unwrap().accuracy - expected).abs() < 1e-9);
    assert!(EvalReport::from_outcomes(std::iter::empty()).overall.is_none());
}

fn region(feature: Vec<f32>, label: &str) -> Region {
    Region {
        feature,
        pseudo_label: label.into(),
        score: 1.0,
    }
}

fn triplet(image: &str, question: &str, answer: &str, qtype: QType, domain: Domain) -> QATriplet {
    QATriplet {
        image_id: image.into(),
        question: question.into(),
        answer: answer.into(),
        qtype,
        domain,
        split: Split::Train,
    }
}

/// Images holding either a "ball" (feature +x) or a "box" (feature -x),
/// asked whether they contain a ball.
fn separable(domain: Domain, n: usize, shift: f32) -> TrainSet {
    let mut records = Vec::new();
    let mut triplets = Vec::new();
    for i in 0..n {
        let id = format!("{domain}-{i}");
        let ball = i % 2 == 0;
        let x = if ball { 1.0 } else { -1.0 };
        records.push(FeatureRecord {
            image_id: id.clone(),
            domain,
            regions: vec![
                region(vec![x + shift, 0.3 * (i % 3) as f32, shift, 0.0], if ball { "ball" } else { "box" }),
                region(vec![0.0, 0.0, 1.0 + shift, 0.5], "table"),
            ],
        });
        let answer = if ball { "yes" } else { "no" };
        triplets.push(triplet(&id, "is there a ball", answer, QType::Yesno, domain));
    }
    TrainSet {
        domain,
        triplets,
        store: FeatureStore::new(records).unwrap(),
    }
}

fn small_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: 200,
        batch_size: 1000,
        embed_dim: 8,
        hidden: 16,
        n_max: 4,
        ..TrainConfig::default()
    };
    cfg.optimizer.lr = 0.01;
    cfg
}

#[test]
fn separable_fixture_is_learned() {
    let set = separable(Domain::R, 12, 0.0);
    let vocab = Vocabulary::from_triplets(&set.triplets, &set.triplets);
    let cfg = small_config();
    let t = train(std::slice::from_ref(&set), &vocab, Method::Simple, &cfg, 3).unwrap();
    assert_eq!(t.losses.len(), 200);
    assert!(t.losses[..11].windows(2).all(|w| w[1] <= w[0]), "{:?}", &t.losses[..11]);
    let r = evaluate(&t, &set.triplets, &set.store, Exec::Sequential).unwrap();
    assert_eq!(r.others.unwrap().accuracy, 100.0);
}

fn two_domain() -> (TrainSet, TrainSet, Vocabulary) {
    let real = separable(Domain::R, 10, 0.0);
    let mut syn = separable(Domain::W, 10, 0.2);
    for (i, t) in syn.triplets.iter_mut().enumerate() {
        t.question = "how many balls are there".into();
        t.answer = if i % 2 == 0 { "1" } else { "0" }.into();
        t.qtype = QType::Counting;
    }
    let vocab = Vocabulary::from_triplets(&real.triplets, real.triplets.iter().chain(&syn.triplets));
    (real, syn, vocab)
}

#[test]
fn zero_lambda_swap_matches_simple_step_for_step() {
    let (real, syn, vocab) = two_domain();
    let mut cfg = small_config();
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.lambda = 0.0;
    let sets = [real.clone(), syn.clone()];
    let a = train(&sets, &vocab, Method::Simple, &cfg, 9).unwrap();
    let b = train(&sets, &vocab, Method::Fswap, &cfg, 9).unwrap();
    assert_eq!(a.losses, b.losses);

    cfg.lambda = 0.5;
    let c = train(&sets, &vocab, Method::Fswap, &cfg, 9).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn training_and_evaluation_are_deterministic() {
    let (real, syn, vocab) = two_domain();
    let mut cfg = small_config();
    cfg.epochs = 20;
    cfg.batch_size = 4;
    cfg.align_steps = 5;
    let sets = [real.clone(), syn.clone()];
    for method in Method::ALL {
        let a = train(&sets, &vocab, method, &cfg, 4).unwrap();
        let b = train(&sets, &vocab, method, &cfg, 4).unwrap();
        assert_eq!(a.losses, b.losses, "{method}");
        assert_eq!(a.model.params, b.model.params, "{method}");
        let ra = evaluate(&a, &real.triplets, &real.store, Exec::Sequential).unwrap();
        let rb = evaluate(&b, &real.triplets, &real.store, Exec::Parallel).unwrap();
        assert_eq!(ra, rb, "{method}");
    }
}

#[test]
fn domain_independent_real_predictions_stay_real() {
    let (real, syn, vocab) = two_domain();
    let cfg = TrainConfig {
        epochs: 10,
        ..small_config()
    };
    let t = train(&[real.clone(), syn], &vocab, Method::DomainIndependent, &cfg, 2).unwrap();
    let answers = &t.model.answers;
    for p in predict(&t, &real.triplets, &real.store, Exec::Sequential).unwrap() {
        assert!(answers.real.contains(&p), "{p}");
    }
}

#[test]
fn model_gradient_matches_finite_differences() {
    let answers = build_answer_space(&s(&["a", "b", "c"]), &[], false, 100).unwrap();
    let shape = ModelShape {
        feature_dim: 5,
        embed_dim: 4,
        hidden: 6,
        n_max: 3,
    };
    let model = ToyModel::new(shape, s(&["what", "is", "this", "that"]), answers, 17);
    let r1 = Matrix::from_rows(&[vec![0.3, -0.2, 0.9, 0.1, -0.5], vec![0.7, 0.4, -0.1, 0.2, 0.6]]).unwrap();
    let r2 = Matrix::from_rows(&[vec![-0.4, 0.8, 0.3, -0.6, 0.2]]).unwrap();
    let words = [vec![0, 1, 2], vec![0, 3], vec![1, 1, 3]];
    let batch = Batch {
        records: vec![&r1, &r2],
        items: vec![(0, &words[0][..]), (1, &words[1][..]), (0, &words[2][..])],
    };
    let targets = [0, 2, 1];
    let (_, grads) = model.loss_and_grads(&batch, &targets).unwrap();
    let mut probe = model.clone();
    let check = grad_check(&model.params, &grads, 1e-6, |p| {
        probe.params = p.clone();
        (probe.loss(&batch, &targets).unwrap(), probe.signature(&batch))
    });
    assert!(check.checked > check.skipped * 10, "{check:?}");
    assert!(check.max_rel_error < 1e-4, "{check:?}");
}

#[test]
fn too_many_regions_is_a_truncation_error() {
    let rec = FeatureRecord {
        image_id: "x".into(),
        domain: Domain::R,
        regions: (0..5).map(|_| region(vec![0.0; 3], "ball")).collect(),
    };
    assert!(matches!(region_matrix(&rec, 4), Err(crate::error::Error::Truncation { count: 5, n_max: 4 })));
}

#[test]
fn method_names_round_trip() {
    for m in Method::ALL {
        assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
    }
    assert!("swap".parse::<Method>().is_err());
}
