//! Masks on disk: binary PGM grids plus a TOML sidecar.
//!
//! `<stem>.id.pgm` and `<stem>.category.pgm` hold the raw grids (`P5`,
//! one byte per value when the largest value fits, otherwise two bytes,
//! big-endian). `<stem>.masks.toml` holds visible fractions and exclusions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::FrameMasks;
use crate::error::{Error, Result};

pub fn encode_pgm(width: u32, height: u32, values: &[u16]) -> Vec<u8> {
    let max = values.iter().copied().max().unwrap_or(0).max(1);
    let mut out = format!("P5\n{width} {height}\n{max}\n").into_bytes();
    if max < 256 {
        out.extend(values.iter().map(|&v| v as u8));
    } else {
        out.extend(values.iter().flat_map(|v| v.to_be_bytes()));
    }
    out
}

pub fn decode_pgm(bytes: &[u8], source_name: &str) -> Result<(u32, u32, Vec<u16>)> {
    let bad = |msg: &str| Error::format(source_name, 1, msg);
    // header: magic, width, height, maxval, each followed by one whitespace byte
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
        pos += 1;
    }
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM (expected P5)"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max == 0 || max > 65535 {
        return Err(bad("maxval out of range"));
    }
    let n = (w as usize) * (h as usize);
    let data = bytes.get(pos..).unwrap_or_default();
    let values: Vec<u16> = if max < 256 {
        if data.len() != n {
            return Err(bad("pixel data length mismatch"));
        }
        data.iter().map(|&b| u16::from(b)).collect()
    } else {
        if data.len() != 2 * n {
            return Err(bad("pixel data length mismatch"));
        }
        data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    Ok((w, h, values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub excluded: Vec<u32>,
    /// Keyed by instance id.
    pub visible_fraction: BTreeMap<String, f64>,
}

pub fn write_masks(dir: &Path, stem: &str, masks: &FrameMasks) -> Result<()> {
    let write = |name: String, bytes: &[u8]| {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    };
    write(format!("{stem}.id.pgm"), &encode_pgm(masks.width, masks.height, &masks.id_mask))?;
    write(
        format!("{stem}.category.pgm"),
        &encode_pgm(masks.width, masks.height, &masks.category_mask),
    )?;
    let sidecar = MaskSidecar {
        width: masks.width,
        height: masks.height,
        excluded: masks.excluded.clone(),
        visible_fraction: masks.visible_fraction.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
    };
    let text = toml::to_string(&sidecar).expect("sidecar serializes");
    write(format!("{stem}.masks.toml"), text.as_bytes())
}

pub fn read_masks(dir: &Path, stem: &str) -> Result<FrameMasks> {
    let read = |name: String| {
        let path = dir.join(&name);
        std::fs::read(&path).map(|b| (b, path.display().to_string())).map_err(|e| Error::io(&path, e))
    };
    let (bytes, name) = read(format!("{stem}.id.pgm"))?;
    let (w, h, id_mask) = decode_pgm(&bytes, &name)?;
    let (bytes, name) = read(format!("{stem}.category.pgm"))?;
    let (cw, ch, category_mask) = decode_pgm(&bytes, &name)?;
    let (bytes, name) = read(format!("{stem}.masks.toml"))?;
    let text = String::from_utf8(bytes).map_err(|_| Error::format(&name, 1, "not UTF-8"))?;
    let side: MaskSidecar = toml::from_str(&text).map_err(|e| Error::from_toml(&name, &text, e))?;
    if (cw, ch) != (w, h) || (side.width, side.height) != (w, h) {
        return Err(Error::Consistency(format!("{stem}: mask dimensions disagree")));
    }
    let mut visible_fraction = BTreeMap::new();
    for (k, v) in side.visible_fraction {
        let id = k
            .parse::<u32>()
            .map_err(|_| Error::format(&name, 1, format!("bad instance id `{k}`")))?;
        visible_fraction.insert(id, v);
    }
    Ok(FrameMasks {
        width: w,
        height: h,
        id_mask,
        category_mask,
        visible_fraction,
        excluded: side.excluded,
    })
}
