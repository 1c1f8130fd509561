use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::grammar::{template, Bindings, Grammar, PositionSlot};
use super::{QATriplet, QType, Split};
use crate::compositor::VerificationReport;
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::rng;
use crate::scene::{SceneGraph, SceneNode};

/// A triplet together with the bindings its question was rendered from.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcedTriplet {
    pub triplet: QATriplet,
    pub bindings: Bindings,
}

#[derive(Clone, Debug)]
pub struct QaGenerator {
    pub grammar: Grammar,
    pub domain: Domain,
}

struct Facts<'a> {
    graph: &'a SceneGraph,
    report: &'a VerificationReport,
    /// Nodes with at least one verified instance.
    visible: Vec<&'a SceneNode>,
}

impl<'a> Facts<'a> {
    fn count(&self, node: &SceneNode) -> u32 {
        self.report.count(&node.category)
    }

    fn node(&self, id: &str) -> Option<&'a SceneNode> {
        self.visible.iter().copied().find(|n| n.node_id == id)
    }

    /// Position phrases `node` satisfies, against visible reference nodes.
    fn positions(&self, node: &SceneNode) -> Vec<PositionSlot> {
        self.graph
            .relation_closure()
            .into_iter()
            .filter(|r| r.subject == node.node_id)
            .filter_map(|r| {
                let reference = self.node(&r.object)?;
                Some(PositionSlot {
                    relation: r.relation,
                    reference: reference.category.clone(),
                    reference_plural: self.count(reference) > 1,
                })
            })
            .collect()
    }
}

impl QaGenerator {
    pub fn new(grammar: Grammar, domain: Domain) -> Self {
        Self { grammar, domain }
    }

    /// Instantiates every applicable template for the requested question
    /// types. Counting answers are the report's verified counts. Yes/no
    /// questions alternate between present categories and distractors drawn
    /// from the vocabulary. Each type's questions come out in a seeded random
    /// order, types in canonical order.
    pub fn generate(
        &self,
        image_id: &str,
        graph: &SceneGraph,
        report: &VerificationReport,
        qtypes: &[QType],
        seed: u64,
    ) -> Result<Vec<QATriplet>> {
        Ok(self
            .generate_bound(image_id, graph, report, qtypes, seed)?
            .into_iter()
            .map(|s| s.triplet)
            .collect())
    }

    pub fn generate_bound(
        &self,
        image_id: &str,
        graph: &SceneGraph,
        report: &VerificationReport,
        qtypes: &[QType],
        seed: u64,
    ) -> Result<Vec<SourcedTriplet>> {
        if !report.pass {
            return Err(Error::RejectedScene(image_id.to_string()));
        }
        let facts = Facts {
            graph,
            report,
            visible: graph.nodes.iter().filter(|n| report.count(&n.category) > 0).collect(),
        };
        let mut rng = rng::keyed_stream(seed, "qa", image_id);
        let wanted: BTreeSet<QType> = qtypes.iter().copied().collect();
        let mut out = Vec::new();
        for qtype in wanted {
            let mut items = match qtype {
                QType::Counting => self.counting(&facts),
                QType::Yesno => self.yesno(&facts, &mut rng),
                QType::Color | QType::Material => self.attribute(&facts, qtype),
                QType::Position => self.position(&facts),
            };
            if qtype != QType::Yesno {
                items.shuffle(&mut rng);
            }
            for (bindings, answer) in items {
                let question = self.grammar.render(&bindings)?;
                out.push(SourcedTriplet {
                    triplet: QATriplet {
                        image_id: image_id.to_string(),
                        question,
                        answer,
                        qtype,
                        domain: self.domain,
                        split: Split::Train,
                    },
                    bindings,
                });
            }
        }
        Ok(out)
    }

    fn counting(&self, f: &Facts) -> Vec<(Bindings, String)> {
        let mut out = Vec::new();
        let tpl = |id| template(id).expect("built-in template");
        for node in &f.visible {
            let answer = f.count(node).to_string();
            let base = |id| {
                let mut b = Bindings::new(tpl(id), true);
                b.noun = Some(node.category.clone());
                b
            };
            out.push((base("C1"), answer.clone()));
            out.push((base("C2"), answer.clone()));
            if let Some(c) = &node.color {
                let mut b = base("C3");
                b.color = Some(c.clone());
                out.push((b, answer.clone()));
            }
            if let Some(m) = &node.material {
                let mut b = base("C4");
                b.material = Some(m.clone());
                out.push((b, answer.clone()));
            }
            for p in f.positions(node) {
                let mut b = base("C5");
                b.position = Some(p.clone());
                out.push((b, answer.clone()));
                if let Some(c) = &node.color {
                    let mut b = base("C6");
                    b.color = Some(c.clone());
                    b.position = Some(p);
                    out.push((b, answer.clone()));
                }
            }
        }
        out
    }

    fn yesno(&self, f: &Facts, rng: &mut rng::StreamRng) -> Vec<(Bindings, String)> {
        let ask = |noun: &str, plural: bool| {
            let mut b = Bindings::new(template(if plural { "Y2" } else { "Y1" }).expect("built-in template"), plural);
            b.noun = Some(noun.to_string());
            b
        };
        let mut present: Vec<Bindings> =
            f.visible.iter().flat_map(|n| [ask(&n.category, false), ask(&n.category, true)]).collect();
        let in_scene: BTreeSet<&str> = f.graph.nodes.iter().map(|n| n.category.as_str()).collect();
        let pool: Vec<&str> = self.grammar.nouns().filter(|n| !in_scene.contains(n)).collect();
        let distractors: Vec<&str> = pool.choose_multiple(rng, present.len()).copied().collect();
        let mut absent: Vec<Bindings> = distractors.iter().map(|n| ask(n, rng.random_bool(0.5))).collect();
        present.shuffle(rng);
        absent.shuffle(rng);

        let mut out = Vec::new();
        let mut yes = present.into_iter();
        let mut no = absent.into_iter();
        loop {
            let (a, b) = (yes.next(), no.next());
            if a.is_none() && b.is_none() {
                break;
            }
            out.extend(a.map(|b| (b, "yes".to_string())));
            out.extend(b.map(|b| (b, "no".to_string())));
        }
        out
    }

    fn attribute(&self, f: &Facts, qtype: QType) -> Vec<(Bindings, String)> {
        let (ids, with_position) = match qtype {
            QType::Color => (["K1", "K2"], Some("K3")),
            _ => (["M1", "M2"], None),
        };
        let mut out = Vec::new();
        for node in &f.visible {
            let value = if qtype == QType::Color { &node.color } else { &node.material };
            let Some(answer) = value.clone() else { continue };
            let plural = f.count(node) > 1;
            let base = |id| {
                let mut b = Bindings::new(template(id).expect("built-in template"), plural);
                b.noun = Some(node.category.clone());
                b
            };
            for id in ids {
                out.push((base(id), answer.clone()));
            }
            if let Some(id) = with_position {
                for p in f.positions(node) {
                    let mut b = base(id);
                    b.position = Some(p);
                    out.push((b, answer.clone()));
                }
            }
        }
        out
    }

    /// Only relations with exactly one subject node yield a question.
    fn position(&self, f: &Facts) -> Vec<(Bindings, String)> {
        let mut out = Vec::new();
        let closure = f.graph.relation_closure();
        let pairs: BTreeSet<_> = closure.iter().map(|r| (r.relation, r.object.as_str())).collect();
        for (relation, object) in pairs {
            let Some(reference) = f.node(object) else { continue };
            let subjects: Vec<&SceneNode> = closure
                .iter()
                .filter(|r| r.relation == relation && r.object == object)
                .filter_map(|r| f.node(&r.subject))
                .collect();
            let [subject] = subjects[..] else { continue };
            let slot = PositionSlot {
                relation,
                reference: reference.category.clone(),
                reference_plural: f.count(reference) > 1,
            };
            for id in ["P1", "P2"] {
                let mut b = Bindings::new(template(id).expect("built-in template"), f.count(subject) > 1);
                b.position = Some(slot.clone());
                out.push((b, subject.category.clone()));
            }
        }
        out
    }
}
