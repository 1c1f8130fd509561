use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Data source tag: real images, annotated indoor scans, or generated scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Domain {
    R,
    H,
    W,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::R, Domain::H, Domain::W];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::R => "R",
            Domain::H => "H",
            Domain::W => "W",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "R" => Ok(Domain::R),
            "H" => Ok(Domain::H),
            "W" => Ok(Domain::W),
            _ => Err(Error::Lookup {
                kind: "domain",
                name: s.to_string(),
            }),
        }
    }
}
