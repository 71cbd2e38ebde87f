//! `.fmap` attribution files: `FMAP`, u32 height, u32 width (little-endian),
//! then height*width little-endian f32 values in row-major order.
//! 16-bit greyscale PNGs are read as value/65535.

use std::path::Path;

use image::DynamicImage;

use super::AttributionMap;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FMAP";

pub fn encode(map: &AttributionMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * map.values().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    for v in map.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], source: &str) -> Result<AttributionMap> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::MalformedAttribution("missing FMAP header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (height, width) = (word(4), word(8));
    let expected = height
        .checked_mul(width)
        .ok_or_else(|| Error::MalformedAttribution("dimensions overflow".into()))?;
    let body = &bytes[12..];
    if body.len() % 4 != 0 || body.len() / 4 != expected {
        return Err(Error::MalformedAttribution(format!(
            "{height}x{width} header needs {expected} values, found {} bytes ({} values)",
            body.len(),
            body.len() / 4
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    AttributionMap::new(height, width, values, source)
}

pub fn load_attribution(path: &Path) -> Result<AttributionMap> {
    let source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_png = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    if is_png {
        match image::open(path)? {
            DynamicImage::ImageLuma16(img) => {
                let (w, h) = img.dimensions();
                let values = img.into_raw().into_iter().map(|v| v as f32 / 65535.0).collect();
                AttributionMap::new(h as usize, w as usize, values, source)
            }
            other => Err(Error::MalformedAttribution(format!(
                "attribution PNG must be 16-bit greyscale, got {:?}",
                other.color()
            ))),
        }
    } else {
        decode(&std::fs::read(path)?, &source)
    }
}

/// Writes the `.fmap` encoding to `path`.
pub fn save_attribution(map: &AttributionMap, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, encode(map))?;
    Ok(())
}
