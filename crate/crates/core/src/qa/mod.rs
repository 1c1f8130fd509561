//! Template-grammar QA generation, annotated-scene ingestion and question
//! parsing.

mod dataset;
mod generate;
pub mod grammar;
mod ingest;
mod io;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{build_dataset, QaMix, SceneFacts};
pub use generate::{QaGenerator, SourcedTriplet};
pub use grammar::{Bindings, Grammar, PositionSlot};
pub use ingest::{export_annotated, ingest_annotated_scene, AnnotatedInstance, AnnotatedScene, ViewInfo};
pub use io::{read_jsonl, write_jsonl};

use crate::domain::Domain;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QType {
    Counting,
    Yesno,
    Color,
    Material,
    Position,
}

impl QType {
    pub const ALL: [QType; 5] = [QType::Counting, QType::Yesno, QType::Color, QType::Material, QType::Position];

    pub fn as_str(self) -> &'static str {
        match self {
            QType::Counting => "counting",
            QType::Yesno => "yesno",
            QType::Color => "color",
            QType::Material => "material",
            QType::Position => "position",
        }
    }
}

impl fmt::Display for QType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Val,
    Test,
}

/// One question about one image. Field order is the serialized order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QATriplet {
    pub image_id: String,
    pub question: String,
    pub answer: String,
    pub qtype: QType,
    pub domain: Domain,
    #[serde(default)]
    pub split: Split,
}

impl QATriplet {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.qtype {
            _ if self.answer.is_empty() => false,
            QType::Counting => {
                self.answer.bytes().all(|b| b.is_ascii_digit()) && (self.answer == "0" || !self.answer.starts_with('0'))
            }
            QType::Yesno => self.answer == "yes" || self.answer == "no",
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "answer `{}` does not fit a {} question",
                self.answer, self.qtype
            )))
        }
    }
}
