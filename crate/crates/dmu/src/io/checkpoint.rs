//! Model checkpoints.
//!
//! Layout: 8-byte magic, u32 format version, u8 dtype tag, u32 header
//! length, JSON header (descriptor, tensor manifest, free-form metadata),
//! tensor data as little-endian scalars in manifest order, and a CRC-32 of
//! everything before it. Integers are little-endian.

use std::path::Path;

use dmu_core::autodiff::{DType, Real, Tensor};
use dmu_core::model::{CaeModel, ModelDescriptor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DMUCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub descriptor: ModelDescriptor,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// A loaded model in whichever precision it was stored.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    F32(CaeModel<f32>),
    F64(CaeModel<f64>),
}

impl AnyModel {
    pub fn descriptor(&self) -> &ModelDescriptor {
        match self {
            AnyModel::F32(m) => &m.descriptor,
            AnyModel::F64(m) => &m.descriptor,
        }
    }

    pub fn dtype(&self) -> DType {
        match self {
            AnyModel::F32(_) => DType::F32,
            AnyModel::F64(_) => DType::F64,
        }
    }
}

pub fn encode<T: Real>(model: &CaeModel<T>, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let names = model.descriptor.layer_shapes();
    let header = Header {
        descriptor: model.descriptor.clone(),
        tensors: names
            .iter()
            .zip(&model.params)
            .map(|((name, _), p)| TensorEntry { name: name.clone(), dtype: T::DTYPE.name().into(), shape: p.shape.clone() })
            .collect(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Numeric(format!("checkpoint header: {e}")))?;
    let mut out = Vec::with_capacity(json.len() + 64 + model.params.iter().map(|p| p.len() * 8).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::DTYPE.tag());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        for v in &p.data {
            v.to_le(&mut out);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn tensors<T: Real>(header: &Header, mut data: &[u8], path: &Path) -> Result<Vec<Tensor<T>>> {
    let width = std::mem::size_of::<T>();
    let mut out = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n: usize = t.shape.iter().product();
        if data.len() < n * width {
            return Err(Error::format(path, format!("tensor `{}` is truncated", t.name)));
        }
        let (head, rest) = data.split_at(n * width);
        out.push(Tensor::new(&t.shape, head.chunks_exact(width).map(T::from_le).collect())?);
        data = rest;
    }
    if !data.is_empty() {
        return Err(Error::format(path, format!("{} trailing bytes after tensors", data.len())));
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(AnyModel, serde_json::Value)> {
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 8 + 4 + 1 + 4 + 4 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body).to_le_bytes() != crc {
        return Err(bad("checksum mismatch"));
    }
    let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let dtype = DType::from_tag(body[12]).ok_or_else(|| bad("unknown dtype tag"))?;
    let hlen = u32::from_le_bytes(body[13..17].try_into().expect("4 bytes")) as usize;
    let json = body.get(17..17 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| bad(&format!("header: {e}")))?;
    let expected = header.descriptor.layer_shapes();
    if expected.len() != header.tensors.len()
        || expected.iter().zip(&header.tensors).any(|((n, s), t)| n != &t.name || s != &t.shape || t.dtype != dtype.name())
    {
        return Err(bad("tensor manifest does not match the descriptor"));
    }
    let data = &body[17 + hlen..];
    let model = match dtype {
        DType::F32 => AnyModel::F32(CaeModel::from_params(header.descriptor.clone(), tensors(&header, data, path)?)?),
        DType::F64 => AnyModel::F64(CaeModel::from_params(header.descriptor.clone(), tensors(&header, data, path)?)?),
    };
    Ok((model, header.meta))
}

pub fn save<T: Real>(path: &Path, model: &CaeModel<T>, meta: &serde_json::Value) -> Result<()> {
    super::write_atomic(path, &encode(model, meta)?)
}

pub fn load(path: &Path) -> Result<(AnyModel, serde_json::Value)> {
    decode(&super::read(path)?, path)
}
