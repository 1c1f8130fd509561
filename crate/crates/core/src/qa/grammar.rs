//! Question templates, surface realization and parsing.
//!
//! A template is a word pattern with slots. `{noun}` is a singular noun,
//! `{nouns}` its plural, `{a_noun}` an article plus singular noun,
//! `{color}` and `{material}` attribute words, and `{position}` a relation
//! phrase followed by `the` and a (singular or plural) reference noun.
//! Templates that ask about one or several things carry a singular and a
//! plural pattern; the binding's `plural` flag picks between them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::QType;
use crate::error::{Error, Result};
use crate::scene::{AssetLibrary, Relation};

/// What fills the answer of a template.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnswerRule {
    /// Verified visible count of the noun's category.
    Count,
    /// Whether the noun's category is present.
    Presence,
    Color,
    Material,
    /// The single node standing in the position relation.
    Subject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrammarTemplate {
    pub id: &'static str,
    pub qtype: QType,
    pub answer: AnswerRule,
    pub singular: Option<&'static str>,
    pub plural: Option<&'static str>,
}

impl GrammarTemplate {
    pub fn pattern(&self, plural: bool) -> Option<&'static str> {
        if plural {
            self.plural
        } else {
            self.singular
        }
    }

    pub fn slots(&self, plural: bool) -> Vec<Slot> {
        self.pattern(plural)
            .map(|p| compile(p).into_iter().filter_map(|pc| match pc {
                Piece::Slot(s) => Some(s),
                Piece::Word(_) => None,
            }).collect())
            .unwrap_or_default()
    }

    pub fn has_slot(&self, slot: Slot) -> bool {
        [false, true].into_iter().any(|pl| self.slots(pl).contains(&slot))
    }
}

const fn t(
    id: &'static str,
    qtype: QType,
    answer: AnswerRule,
    singular: Option<&'static str>,
    plural: Option<&'static str>,
) -> GrammarTemplate {
    GrammarTemplate {
        id,
        qtype,
        answer,
        singular,
        plural,
    }
}

use AnswerRule as A;
use QType as Q;

pub const TEMPLATES: &[GrammarTemplate] = &[
    t("C1", Q::Counting, A::Count, None, Some("How many {nouns} are there?")),
    t("C2", Q::Counting, A::Count, None, Some("How many {nouns} are in the picture?")),
    t("C3", Q::Counting, A::Count, None, Some("How many {color} {nouns} are there?")),
    t("C4", Q::Counting, A::Count, None, Some("How many {material} {nouns} are there?")),
    t("C5", Q::Counting, A::Count, None, Some("How many {nouns} are {position}?")),
    t("C6", Q::Counting, A::Count, None, Some("How many {color} {nouns} are {position}?")),
    t("Y1", Q::Yesno, A::Presence, Some("Is there {a_noun} in the picture?"), None),
    t("Y2", Q::Yesno, A::Presence, None, Some("Are there any {nouns} in the picture?")),
    t("K1", Q::Color, A::Color, Some("What color is the {noun}?"), Some("What color are the {nouns}?")),
    t("K2", Q::Color, A::Color, Some("What is the color of the {noun}?"), Some("What is the color of the {nouns}?")),
    t(
        "K3",
        Q::Color,
        A::Color,
        Some("What color is the {noun} {position}?"),
        Some("What color are the {nouns} {position}?"),
    ),
    t(
        "M1",
        Q::Material,
        A::Material,
        Some("What material is the {noun} made of?"),
        Some("What material are the {nouns} made of?"),
    ),
    t("M2", Q::Material, A::Material, Some("What is the {noun} made of?"), Some("What are the {nouns} made of?")),
    t("P1", Q::Position, A::Subject, Some("What is {position}?"), Some("What are {position}?")),
    t("P2", Q::Position, A::Subject, Some("Which object is {position}?"), Some("Which objects are {position}?")),
];

pub fn template(id: &str) -> Option<&'static GrammarTemplate> {
    TEMPLATES.iter().find(|t| t.id == id)
}

pub fn relation_phrase(r: Relation) -> &'static str {
    match r {
        Relation::OnTopOf => "on",
        Relation::Under => "under",
        Relation::LeftOf => "to the left of",
        Relation::RightOf => "to the right of",
        Relation::InFrontOf => "in front of",
        Relation::Behind => "behind",
    }
}

const IRREGULAR_PLURALS: &[(&str, &str)] = &[
    ("bench", "benches"),
    ("box", "boxes"),
    ("brush", "brushes"),
    ("bus", "buses"),
    ("child", "children"),
    ("couch", "couches"),
    ("dish", "dishes"),
    ("fish", "fish"),
    ("foot", "feet"),
    ("glass", "glasses"),
    ("knife", "knives"),
    ("leaf", "leaves"),
    ("mouse", "mice"),
    ("person", "people"),
    ("potato", "potatoes"),
    ("sheep", "sheep"),
    ("shelf", "shelves"),
    ("tomato", "tomatoes"),
    ("watch", "watches"),
];

pub fn pluralize(noun: &str) -> String {
    IRREGULAR_PLURALS
        .iter()
        .find(|(s, _)| *s == noun)
        .map(|(_, p)| p.to_string())
        .unwrap_or_else(|| format!("{noun}s"))
}

pub fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionSlot {
    pub relation: Relation,
    /// Singular reference noun.
    pub reference: String,
    pub reference_plural: bool,
}

/// A template instantiation: everything needed to render a question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bindings {
    pub template: String,
    pub qtype: QType,
    /// Which pattern of the template was used.
    pub plural: bool,
    /// Singular noun.
    pub noun: Option<String>,
    pub color: Option<String>,
    pub material: Option<String>,
    pub position: Option<PositionSlot>,
}

impl Bindings {
    pub fn new(template: &GrammarTemplate, plural: bool) -> Self {
        Self {
            template: template.id.to_string(),
            qtype: template.qtype,
            plural,
            noun: None,
            color: None,
            material: None,
            position: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Noun,
    Nouns,
    ANoun,
    Color,
    Material,
    Position,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Piece {
    Word(String),
    Slot(Slot),
}

fn compile(pattern: &str) -> Vec<Piece> {
    pattern
        .trim_end_matches('?')
        .split_whitespace()
        .map(|w| match w {
            "{noun}" => Piece::Slot(Slot::Noun),
            "{nouns}" => Piece::Slot(Slot::Nouns),
            "{a_noun}" => Piece::Slot(Slot::ANoun),
            "{color}" => Piece::Slot(Slot::Color),
            "{material}" => Piece::Slot(Slot::Material),
            "{position}" => Piece::Slot(Slot::Position),
            _ => Piece::Word(w.to_lowercase()),
        })
        .collect()
}

/// Color, material and noun vocabularies.
#[derive(Clone, Debug)]
pub struct Grammar {
    colors: BTreeSet<String>,
    materials: BTreeSet<String>,
    plural_of: BTreeMap<String, String>,
    singular_of: BTreeMap<String, String>,
}

impl Grammar {
    pub fn new<'a>(
        nouns: impl IntoIterator<Item = &'a str>,
        colors: impl IntoIterator<Item = &'a str>,
        materials: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let mut g = Grammar {
            colors: colors.into_iter().map(str::to_string).collect(),
            materials: materials.into_iter().map(str::to_string).collect(),
            plural_of: BTreeMap::new(),
            singular_of: BTreeMap::new(),
        };
        for n in nouns {
            g.add_noun(n)?;
        }
        let reserved: BTreeSet<String> = TEMPLATES
            .iter()
            .flat_map(|t| [t.singular, t.plural])
            .flatten()
            .flat_map(compile)
            .filter_map(|p| match p {
                Piece::Word(w) => Some(w),
                Piece::Slot(_) => None,
            })
            .chain(["a".to_string(), "an".to_string()])
            .chain(Relation::ALL.iter().flat_map(|r| relation_phrase(*r).split(' ').map(str::to_string)))
            .collect();
        let words = g.colors.iter().chain(&g.materials).chain(g.plural_of.keys()).chain(g.singular_of.keys());
        for w in words {
            if w.is_empty() || w.chars().any(|c| c.is_whitespace() || c.is_uppercase() || c == '?') {
                return Err(Error::Validation(format!("vocabulary word `{w}` must be one lowercase token")));
            }
            if reserved.contains(w) {
                return Err(Error::Validation(format!("vocabulary word `{w}` collides with template text")));
            }
        }
        if let Some(c) = g.colors.intersection(&g.materials).next() {
            return Err(Error::Validation(format!("`{c}` is both a color and a material")));
        }
        Ok(g)
    }

    fn add_noun(&mut self, noun: &str) -> Result<()> {
        let plural = pluralize(noun);
        let clash = plural == noun
            || self.colors.contains(noun)
            || self.materials.contains(noun)
            || self.plural_of.contains_key(noun)
            || self.plural_of.contains_key(&plural)
            || self.singular_of.contains_key(noun)
            || self.singular_of.contains_key(&plural);
        if clash {
            return Err(Error::Validation(format!("noun `{noun}` ({plural}) is ambiguous in the vocabulary")));
        }
        self.plural_of.insert(noun.to_string(), plural.clone());
        self.singular_of.insert(plural, noun.to_string());
        Ok(())
    }

    pub fn from_library(library: &AssetLibrary) -> Result<Self> {
        let nouns = library.categories();
        let materials = library.material_names();
        Self::new(nouns, library.colors.iter().map(String::as_str), materials)
    }

    pub fn nouns(&self) -> impl Iterator<Item = &str> {
        self.plural_of.keys().map(String::as_str)
    }

    pub fn has_noun(&self, noun: &str) -> bool {
        self.plural_of.contains_key(noun)
    }

    pub fn plural(&self, noun: &str) -> Option<&str> {
        self.plural_of.get(noun).map(String::as_str)
    }

    /// Every word a generated question may contain besides template text.
    pub fn vocabulary(&self) -> BTreeSet<&str> {
        self.colors
            .iter()
            .chain(&self.materials)
            .chain(self.plural_of.keys())
            .chain(self.singular_of.keys())
            .map(String::as_str)
            .collect()
    }

    /// Renders a question from its bindings.
    pub fn render(&self, b: &Bindings) -> Result<String> {
        let tpl = template(&b.template).ok_or_else(|| Error::Lookup {
            kind: "template",
            name: b.template.clone(),
        })?;
        let pattern = tpl
            .pattern(b.plural)
            .ok_or_else(|| Error::Validation(format!("template {} has no {} form", tpl.id, if b.plural { "plural" } else { "singular" })))?;
        let missing = |what: &str| Error::Validation(format!("template {} needs a {what}", tpl.id));
        let noun = || -> Result<&str> {
            let n = b.noun.as_deref().ok_or_else(|| missing("noun"))?;
            if !self.has_noun(n) {
                return Err(Error::Lookup { kind: "noun", name: n.to_string() });
            }
            Ok(n)
        };
        let mut words: Vec<String> = Vec::new();
        let mut used = (false, false, false, false);
        for piece in compile(pattern) {
            match piece {
                Piece::Word(w) => words.push(w),
                Piece::Slot(Slot::Noun) => {
                    words.push(noun()?.to_string());
                    used.0 = true;
                }
                Piece::Slot(Slot::Nouns) => {
                    words.push(self.plural_of[noun()?].clone());
                    used.0 = true;
                }
                Piece::Slot(Slot::ANoun) => {
                    let n = noun()?;
                    words.push(format!("{} {n}", article(n)));
                    used.0 = true;
                }
                Piece::Slot(Slot::Color) => {
                    let c = b.color.as_deref().ok_or_else(|| missing("color"))?;
                    if !self.colors.contains(c) {
                        return Err(Error::Lookup { kind: "color", name: c.to_string() });
                    }
                    words.push(c.to_string());
                    used.1 = true;
                }
                Piece::Slot(Slot::Material) => {
                    let m = b.material.as_deref().ok_or_else(|| missing("material"))?;
                    if !self.materials.contains(m) {
                        return Err(Error::Lookup { kind: "material", name: m.to_string() });
                    }
                    words.push(m.to_string());
                    used.2 = true;
                }
                Piece::Slot(Slot::Position) => {
                    let p = b.position.as_ref().ok_or_else(|| missing("position"))?;
                    let r = self.plural_of.get(&p.reference).ok_or_else(|| Error::Lookup {
                        kind: "noun",
                        name: p.reference.clone(),
                    })?;
                    let reference = if p.reference_plural { r.as_str() } else { p.reference.as_str() };
                    words.push(format!("{} the {reference}", relation_phrase(p.relation)));
                    used.3 = true;
                }
            }
        }
        let extra = (b.noun.is_some() && !used.0)
            || (b.color.is_some() && !used.1)
            || (b.material.is_some() && !used.2)
            || (b.position.is_some() && !used.3);
        if extra {
            return Err(Error::Validation(format!("bindings carry values template {} does not use", tpl.id)));
        }
        let mut q = words.join(" ");
        if let Some(first) = q.get(..1) {
            q.replace_range(..1, &first.to_uppercase());
        }
        q.push('?');
        Ok(q)
    }

    /// Recovers the template and slot values of a question.
    pub fn parse(&self, question: &str) -> Result<Bindings> {
        let text = question.trim();
        let body = text.strip_suffix('?').ok_or_else(|| Error::Parse(question.to_string()))?;
        let tokens: Vec<String> = body.split_whitespace().map(str::to_lowercase).collect();
        let tokens: Vec<&str> = tokens.iter().map(String::as_str).collect();
        for tpl in TEMPLATES {
            for plural in [false, true] {
                let Some(pattern) = tpl.pattern(plural) else { continue };
                let pieces = compile(pattern);
                let mut b = Bindings::new(tpl, plural);
                if self.match_pieces(&pieces, &tokens, &mut b) {
                    return Ok(b);
                }
            }
        }
        Err(Error::Parse(question.to_string()))
    }

    fn match_pieces(&self, pieces: &[Piece], tokens: &[&str], b: &mut Bindings) -> bool {
        let Some((first, rest)) = pieces.split_first() else {
            return tokens.is_empty();
        };
        match first {
            Piece::Word(w) => tokens.first() == Some(&w.as_str()) && self.match_pieces(rest, &tokens[1..], b),
            Piece::Slot(slot) => {
                for (consumed, fill) in self.slot_candidates(*slot, tokens) {
                    let saved = b.clone();
                    fill(b);
                    if self.match_pieces(rest, &tokens[consumed..], b) {
                        return true;
                    }
                    *b = saved;
                }
                false
            }
        }
    }

    /// Ways `slot` can match a prefix of `tokens`: tokens consumed plus the binding update.
    #[allow(clippy::type_complexity)]
    fn slot_candidates(&self, slot: Slot, tokens: &[&str]) -> Vec<(usize, Box<dyn Fn(&mut Bindings)>)> {
        let mut out: Vec<(usize, Box<dyn Fn(&mut Bindings)>)> = Vec::new();
        let first = tokens.first().copied().unwrap_or_default();
        match slot {
            Slot::Noun if self.plural_of.contains_key(first) => {
                let n = first.to_string();
                out.push((1, Box::new(move |b| b.noun = Some(n.clone()))));
            }
            Slot::Nouns => {
                if let Some(n) = self.singular_of.get(first) {
                    let n = n.clone();
                    out.push((1, Box::new(move |b| b.noun = Some(n.clone()))));
                }
            }
            Slot::ANoun => {
                if let Some(&n) = tokens.get(1) {
                    if self.plural_of.contains_key(n) && article(n) == first {
                        let n = n.to_string();
                        out.push((2, Box::new(move |b| b.noun = Some(n.clone()))));
                    }
                }
            }
            Slot::Color if self.colors.contains(first) => {
                let c = first.to_string();
                out.push((1, Box::new(move |b| b.color = Some(c.clone()))));
            }
            Slot::Material if self.materials.contains(first) => {
                let m = first.to_string();
                out.push((1, Box::new(move |b| b.material = Some(m.clone()))));
            }
            Slot::Position => {
                for r in Relation::ALL {
                    let phrase: Vec<&str> = relation_phrase(r).split(' ').collect();
                    let n = phrase.len();
                    if tokens.len() < n + 2 || tokens[..n] != phrase[..] || tokens[n] != "the" {
                        continue;
                    }
                    let word = tokens[n + 1];
                    let found = if self.plural_of.contains_key(word) {
                        Some((word.to_string(), false))
                    } else {
                        self.singular_of.get(word).map(|s| (s.clone(), true))
                    };
                    if let Some((reference, reference_plural)) = found {
                        out.push((
                            n + 2,
                            Box::new(move |b| {
                                b.position = Some(PositionSlot {
                                    relation: r,
                                    reference: reference.clone(),
                                    reference_plural,
                                })
                            }),
                        ));
                    }
                }
            }
            _ => {}
        }
        out
    }
}
