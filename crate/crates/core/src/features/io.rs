//! Feature files. Layout (all integers little-endian):
//!
//! | offset | size | field |
//! |---|---|---|
//! | 0 | 4 | magic `SVQF` |
//! | 4 | 2 | version (1) |
//! | 6 | 2 | reserved, 0 |
//! | 8 | 4 | dim |
//! | 12 | 4 | region count |
//! | 16 | 4·dim·count | f32 rows |
//! | … | 4 | trailer length in bytes |
//! | … | n | UTF-8 JSON trailer: image id, domain, labels, scores |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureRecord, FeatureStore, Region};
use crate::domain::Domain;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SVQF";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

#[derive(Serialize, Deserialize)]
struct Trailer {
    image_id: String,
    domain: Domain,
    labels: Vec<String>,
    scores: Vec<f32>,
}

pub fn encode_record(rec: &FeatureRecord) -> Result<Vec<u8>> {
    let dim = rec.dim();
    if rec.regions.iter().any(|r| r.feature.len() != dim) {
        return Err(Error::Shape(format!("record {} mixes feature lengths", rec.image_id)));
    }
    let count = rec.regions.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * dim * count + 64 * count);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u32).to_le_bytes());
    for r in &rec.regions {
        for x in &r.feature {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let trailer = Trailer {
        image_id: rec.image_id.clone(),
        domain: rec.domain,
        labels: rec.regions.iter().map(|r| r.pseudo_label.clone()).collect(),
        scores: rec.regions.iter().map(|r| r.score).collect(),
    };
    let json = serde_json::to_vec(&trailer).expect("trailer serializes");
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn decode_record(bytes: &[u8], source_name: &str) -> Result<FeatureRecord> {
    let bad = |msg: String| Error::format(source_name, 0, msg);
    let u32_at = |at: usize| -> Result<usize> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| bad(format!("truncated at byte {at}")))
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(bad("missing SVQF magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dim = u32_at(8)?;
    let count = u32_at(12)?;
    let body = dim
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| bad("size overflow".into()))?;
    let trailer_at = HEADER_LEN + body;
    let trailer_len = u32_at(trailer_at)?;
    let json = bytes
        .get(trailer_at + 4..trailer_at + 4 + trailer_len)
        .ok_or_else(|| bad("truncated trailer".into()))?;
    if bytes.len() != trailer_at + 4 + trailer_len {
        return Err(bad("trailing bytes after the trailer".into()));
    }
    let t: Trailer = serde_json::from_slice(json).map_err(|e| bad(format!("trailer: {e}")))?;
    if t.labels.len() != count || t.scores.len() != count {
        return Err(bad(format!("trailer lists {} labels for {count} regions", t.labels.len())));
    }
    let rows = &bytes[HEADER_LEN..trailer_at];
    let regions = t
        .labels
        .into_iter()
        .zip(t.scores)
        .enumerate()
        .map(|(i, (pseudo_label, score))| Region {
            feature: rows[i * dim * 4..(i + 1) * dim * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            pseudo_label,
            score,
        })
        .collect();
    Ok(FeatureRecord {
        image_id: t.image_id,
        domain: t.domain,
        regions,
    })
}

pub fn write_record(path: &Path, rec: &FeatureRecord) -> Result<()> {
    std::fs::write(path, encode_record(rec)?).map_err(|e| Error::io(path, e))
}

pub fn read_record(path: &Path) -> Result<FeatureRecord> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_record(&bytes, &path.display().to_string())
}

/// Writes one `<image_id>.svqf` file per record.
pub fn save_store(dir: &Path, store: &FeatureStore) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for rec in store.records() {
        write_record(&dir.join(format!("{}.svqf", rec.image_id)), rec)?;
    }
    Ok(())
}

/// Loads every `.svqf` file in `dir`, in file-name order.
pub fn load_store(dir: &Path) -> Result<FeatureStore> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svqf"))
        .collect();
    paths.sort();
    let records = paths.iter().map(|p| read_record(p)).collect::<Result<Vec<_>>>()?;
    FeatureStore::new(records)
}
