use serde::{Deserialize, Serialize};

use crate::domain::Domain;
use crate::error::{Error, Result};

pub const DEFAULT_DI_TOKENS: usize = 100;

/// Output classes. Real tokens come first; with `domain_independent` the
/// synthetic answers get their own extension tokens after them, otherwise
/// the space is the plain union.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpace {
    pub real: Vec<String>,
    pub extension: Vec<String>,
    pub domain_independent: bool,
}

pub fn build_answer_space(
    real_answers: &[String],
    synthetic_answers: &[String],
    domain_independent: bool,
    di_tokens: usize,
) -> Result<AnswerSpace> {
    if real_answers.is_empty() && synthetic_answers.is_empty() {
        return Err(Error::Validation("no answers to build a space from".into()));
    }
    let mut real: Vec<String> = Vec::new();
    for a in real_answers {
        if !real.contains(a) {
            real.push(a.clone());
        }
    }
    let mut extension: Vec<String> = Vec::new();
    for a in synthetic_answers {
        if domain_independent {
            if !extension.contains(a) {
                extension.push(a.clone());
            }
        } else if !real.contains(a) {
            real.push(a.clone());
        }
    }
    if extension.len() > di_tokens {
        return Err(Error::Capacity(format!(
            "{} distinct synthetic answers exceed the {di_tokens} extension tokens",
            extension.len()
        )));
    }
    Ok(AnswerSpace {
        real,
        extension,
        domain_independent,
    })
}

impl AnswerSpace {
    pub fn len(&self) -> usize {
        self.real.len() + self.extension.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn token(&self, i: usize) -> &str {
        if i < self.real.len() {
            &self.real[i]
        } else {
            &self.extension[i - self.real.len()]
        }
    }

    pub fn is_extension(&self, i: usize) -> bool {
        i >= self.real.len()
    }

    fn real_index(&self, a: &str) -> Option<usize> {
        self.real.iter().position(|t| t == a)
    }

    fn extension_index(&self, a: &str) -> Option<usize> {
        self.extension.iter().position(|t| t == a).map(|i| i + self.real.len())
    }

    /// Training target for an answer from `domain`.
    pub fn target(&self, answer: &str, domain: Domain) -> Option<usize> {
        if self.domain_independent && domain != Domain::R {
            self.extension_index(answer)
        } else {
            self.real_index(answer)
        }
    }

    /// Predicted token for `domain`. On real data a domain-independent space
    /// only lets real tokens win; each real token scores its own probability
    /// plus that of its extension twin, if it has one.
    pub fn predict(&self, logits: &[f64], domain: Domain) -> usize {
        let argmax = |range: std::ops::Range<usize>, score: &dyn Fn(usize) -> f64| {
            range.fold(None::<(usize, f64)>, |best, i| {
                let s = score(i);
                match best {
                    Some((_, b)) if b >= s => best,
                    _ => Some((i, s)),
                }
            })
            .map_or(0, |(i, _)| i)
        };
        if !self.domain_independent {
            return argmax(0..self.len(), &|i| logits[i]);
        }
        if domain != Domain::R {
            return argmax(self.real.len()..self.len(), &|i| logits[i]);
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let p: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        argmax(0..self.real.len(), &|i| {
            p[i] + self.extension_index(&self.real[i]).map_or(0.0, |j| p[j])
        })
    }
}
