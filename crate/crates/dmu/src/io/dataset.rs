//! Dataset directory: `dataset.json` plus one `NNNNNN.rec` file per
//! primed pair.
//!
//! Record layout (little-endian): magic `DMUREC1\0`, u32 width, u32
//! height, u32 state length, y1 and y2 as f32 rasters, x1 and x2 as f64,
//! mask2 as one byte per pixel, CRC-32 of everything before it.

use std::path::{Path, PathBuf};

use dmu_core::data::PrimedSample;
use dmu_core::render::{DepthImage, SegMask};
use dmu_core::scene::{ModeledState, UnmodeledParams};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index file naming the records, kept apart from the run `manifest.json`.
pub const INDEX: &str = "dataset.json";
pub const RECORD_MAGIC: &[u8; 8] = b"DMUREC1\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario: String,
    pub width: usize,
    pub height: usize,
    pub state_dim: usize,
    pub count: usize,
    pub seed: u64,
    pub max_depth: f64,
    pub records: Vec<String>,
}

/// One stored pair. `z` and `mask1` are not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub y1: DepthImage,
    pub y2: DepthImage,
    pub x1: ModeledState,
    pub x2: ModeledState,
    pub mask2: SegMask,
}

impl Record {
    pub fn from_sample(s: &PrimedSample) -> Self {
        Record { y1: s.y1.clone(), y2: s.y2.clone(), x1: s.x1.clone(), x2: s.x2.clone(), mask2: s.mask2.clone() }
    }

    /// Back to a training sample; the unstored fields are left empty.
    pub fn into_sample(self) -> PrimedSample {
        let mask1 = SegMask { width: self.mask2.width, height: self.mask2.height, data: vec![false; self.mask2.data.len()] };
        PrimedSample { y1: self.y1, y2: self.y2, x1: self.x1, x2: self.x2, mask1, mask2: self.mask2, z: UnmodeledParams(Vec::new()) }
    }
}

pub fn encode_record(r: &Record) -> Vec<u8> {
    let mut out = RECORD_MAGIC.to_vec();
    for v in [r.y1.width, r.y1.height, r.x1.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for img in [&r.y1, &r.y2] {
        img.data.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    for x in [&r.x1, &r.x2] {
        x.0.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    out.extend(r.mask2.data.iter().map(|m| *m as u8));
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn decode_record(bytes: &[u8], path: &Path) -> Result<Record> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 24 || &bytes[..8] != RECORD_MAGIC {
        return Err(bad("not a dataset record"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body).to_le_bytes() != crc {
        return Err(bad("checksum mismatch"));
    }
    let u = |i: usize| u32::from_le_bytes(body[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (w, h, s) = (u(0), u(1), u(2));
    let px = w * h;
    if body.len() != 20 + 8 * px + 16 * s + px {
        return Err(bad("record size does not match its header"));
    }
    let mut pos = 20;
    let image = |pos: &mut usize| -> Result<DepthImage> {
        let data = body[*pos..*pos + 4 * px].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4"))).collect();
        *pos += 4 * px;
        Ok(DepthImage::new(w, h, data)?)
    };
    let y1 = image(&mut pos)?;
    let y2 = image(&mut pos)?;
    let state = |pos: &mut usize| {
        let v = body[*pos..*pos + 8 * s].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect();
        *pos += 8 * s;
        ModeledState(v)
    };
    let x1 = state(&mut pos);
    let x2 = state(&mut pos);
    let mask2 = SegMask::new(w, h, body[pos..pos + px].iter().map(|b| *b != 0).collect())?;
    Ok(Record { y1, y2, x1, x2, mask2 })
}

pub fn record_name(i: usize) -> String {
    format!("{i:06}.rec")
}

pub fn write_record(dir: &Path, i: usize, r: &Record) -> Result<PathBuf> {
    let p = dir.join(record_name(i));
    super::write_atomic(&p, &encode_record(r))?;
    Ok(p)
}

pub fn write_manifest(dir: &Path, m: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::format(dir, e.to_string()))?;
    super::write_text(&dir.join(INDEX), &text)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let p = dir.join(INDEX);
    serde_json::from_slice(&super::read(&p)?).map_err(|e| Error::format(&p, e.to_string()))
}

pub fn read_record(dir: &Path, name: &str) -> Result<Record> {
    let p = dir.join(name);
    decode_record(&super::read(&p)?, &p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dmu_core::data::make_primed_pair;
    use dmu_core::scene::presets;

    #[test]
    fn record_round_trip() {
        let spec = presets::preset("box").unwrap();
        let r = Record::from_sample(&make_primed_pair(&spec, 3).unwrap());
        assert_eq!(decode_record(&encode_record(&r), Path::new("r")).unwrap(), r);
    }

    #[test]
    fn damaged_records_are_rejected() {
        let spec = presets::preset("box").unwrap();
        let mut b = encode_record(&Record::from_sample(&make_primed_pair(&spec, 3).unwrap()));
        b[30] ^= 0x40;
        assert!(decode_record(&b, Path::new("r")).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            scenario: "box".into(),
            width: 64,
            height: 32,
            state_dim: 7,
            count: 1,
            seed: 2,
            max_depth: 2.0,
            records: vec![record_name(0)],
        };
        write_manifest(dir.path(), &m).unwrap();
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }
}
