//! Binary 8-bit PGM (`P5`) for masks and depth previews.

use std::path::Path;

use dmu_core::render::{DepthImage, SegMask};

use crate::error::{Error, Result};

pub fn encode(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Mask pixels become 255, the rest 0.
pub fn encode_mask(mask: &SegMask) -> Vec<u8> {
    let px: Vec<u8> = mask.data.iter().map(|m| if *m { 255 } else { 0 }).collect();
    encode(mask.width, mask.height, &px)
}

/// Near is bright; invalid pixels are black.
pub fn encode_depth_preview(img: &DepthImage, max_depth: f64) -> Vec<u8> {
    let px: Vec<u8> = img
        .data
        .iter()
        .map(|v| if *v <= 0.0 { 0 } else { (255.0 * (1.0 - (*v as f64 / max_depth).clamp(0.0, 1.0))).round() as u8 })
        .collect();
    encode(img.width, img.height, &px)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let mut tokens = Vec::new();
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, "truncated PGM header"));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(Error::format(path, format!("expected `P5`, found `{}`", tokens[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::format(path, format!("bad header value `{s}`")));
    let (w, h, max) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if max == 0 || max > 255 {
        return Err(Error::format(path, "only 8-bit PGM is supported"));
    }
    let raster = bytes.get(pos + 1..).unwrap_or(&[]);
    if raster.len() != w * h {
        return Err(Error::format(path, format!("expected {} raster bytes, found {}", w * h, raster.len())));
    }
    Ok((w, h, raster.to_vec()))
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<SegMask> {
    let (w, h, px) = decode(bytes, path)?;
    Ok(SegMask::new(w, h, px.iter().map(|v| *v > 0).collect())?)
}

pub fn write_mask(path: &Path, mask: &SegMask) -> Result<()> {
    super::write_atomic(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<SegMask> {
    decode_mask(&super::read(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let m = SegMask::new(4, 2, vec![true, false, false, true, true, true, false, false]).unwrap();
        assert_eq!(decode_mask(&encode_mask(&m), Path::new("m")).unwrap(), m);
    }

    #[test]
    fn comments_are_skipped() {
        let bytes = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        assert_eq!(decode(bytes, Path::new("m")).unwrap(), (2, 1, vec![0, 255]));
    }

    #[test]
    fn preview_maps_near_to_bright() {
        let img = DepthImage::new(3, 1, vec![0.0, 0.5, 2.0]).unwrap();
        let bytes = encode_depth_preview(&img, 2.0);
        assert_eq!(&bytes[bytes.len() - 3..], &[0, 191, 0]);
    }
}
