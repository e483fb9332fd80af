//! Grayscale Portable Float Map, little-endian, rows stored bottom to top.

use std::path::Path;

use crate::error::{self, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    /// Row-major, top row first.
    pub data: Vec<f32>,
}

pub fn encode(map: &FloatMap) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", map.width, map.height).into_bytes();
    out.reserve(4 * map.data.len());
    for row in map.data.chunks_exact(map.width.max(1)).rev() {
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn header_token<'a>(bytes: &'a [u8], pos: &mut usize, path: &Path) -> Result<&'a str> {
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos == start || *pos >= bytes.len() {
        return Err(Error::format(path, "truncated PFM header"));
    }
    let tok = std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::format(path, "non-ASCII PFM header"))?;
    *pos += 1;
    Ok(tok)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<FloatMap> {
    let mut pos = 0;
    match header_token(bytes, &mut pos, path)? {
        "Pf" => {}
        "PF" => return Err(Error::format(path, "color PFM where grayscale was expected")),
        other => return Err(Error::format(path, format!("bad PFM magic {:?}", other))),
    }
    let mut dim = |name: &str| -> Result<usize> {
        header_token(bytes, &mut pos, path)?
            .parse()
            .map_err(|_| Error::format(path, format!("bad PFM {}", name)))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let scale: f64 = header_token(bytes, &mut pos, path)?
        .parse()
        .map_err(|_| Error::format(path, "bad PFM scale"))?;
    if scale >= 0.0 {
        return Err(Error::format(path, "big-endian PFM is not supported"));
    }
    let body = &bytes[pos..];
    let expected = 4 * width * height;
    if body.len() != expected {
        return Err(Error::format(
            path,
            format!("PFM body has {} bytes, expected {}", body.len(), expected),
        ));
    }
    let mut data = vec![0.0f32; width * height];
    for (r, row) in body.chunks_exact(4 * width.max(1)).enumerate() {
        let dst = (height - 1 - r) * width;
        for (k, b) in row.chunks_exact(4).enumerate() {
            data[dst + k] = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    Ok(FloatMap { width, height, data })
}

pub fn write(path: &Path, map: &FloatMap) -> Result<()> {
    error::write(path, &encode(map))
}

pub fn read(path: &Path) -> Result<FloatMap> {
    decode(&error::read(path)?, path)
}
