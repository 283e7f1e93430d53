//! Grayscale portable float map: `Pf`, little-endian (negative scale),
//! rows stored bottom to top.

use std::path::Path;

use dmu_core::render::DepthImage;

use crate::error::{Error, Result};

pub fn encode(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.data.len() * 4);
    for row in (0..img.height).rev() {
        for v in &img.data[row * img.width..(row + 1) * img.width] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Reads three whitespace-separated header tokens; exactly one whitespace
/// byte separates the last token from the raster.
fn header(bytes: &[u8]) -> Option<([&str; 4], usize)> {
    let mut tokens = [""; 4];
    let mut pos = 0;
    for t in tokens.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        *t = std::str::from_utf8(&bytes[start..pos]).ok()?;
        if t.is_empty() {
            return None;
        }
    }
    (pos < bytes.len()).then_some((tokens, pos + 1))
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<DepthImage> {
    let ([magic, w, h, scale], start) = header(bytes).ok_or_else(|| Error::format(path, "truncated PFM header"))?;
    if magic != "Pf" {
        return Err(Error::format(path, format!("expected grayscale `Pf`, found `{magic}`")));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(path, format!("bad dimension `{s}`")));
    let (w, h) = (parse(w)?, parse(h)?);
    let scale: f64 = scale.parse().map_err(|_| Error::format(path, format!("bad scale `{scale}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(path, "scale must be nonzero"));
    }
    let little = scale < 0.0;
    let raster = &bytes[start..];
    if raster.len() != w * h * 4 {
        return Err(Error::format(path, format!("expected {} raster bytes, found {}", w * h * 4, raster.len())));
    }
    let mut data = vec![0.0f32; w * h];
    for (k, chunk) in raster.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().expect("4 bytes");
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row_from_bottom, col) = (k / w, k % w);
        data[(h - 1 - row_from_bottom) * w + col] = v;
    }
    Ok(DepthImage::new(w, h, data)?)
}

pub fn write(path: &Path, img: &DepthImage) -> Result<()> {
    super::write_atomic(path, &encode(img))
}

pub fn read(path: &Path) -> Result<DepthImage> {
    decode(&super::read(path)?, path)
}
