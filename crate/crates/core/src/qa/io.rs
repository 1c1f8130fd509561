use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::QATriplet;
use crate::error::{Error, Result};

/// Writes one JSON object per line.
pub fn write_jsonl(path: &Path, triplets: &[QATriplet]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triplets {
        let line = serde_json::to_string(t).expect("triplet serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<QATriplet>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: QATriplet = serde_json::from_str(&line).map_err(|e| Error::format(&name, i + 1, e.to_string()))?;
        t.validate().map_err(|e| Error::format(&name, i + 1, e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}
