//! Binary model file.
//!
//! Layout: magic `ANET1`, one version byte, a little-endian `u32` length
//! followed by that many bytes of UTF-8 JSON header, then every stored value
//! as little-endian `f32` in declared layer order. Per layer the order is
//! conv weight, conv bias; BN gamma, beta, running mean, running variance;
//! finally head weight and head bias.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::net::{Layer, Model};
use crate::model::spec::{ModelSpec, Variant};

pub const MAGIC: &[u8; 5] = b"ANET1";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub spec_hash: String,
    pub variant: Variant,
    pub channel_plan: Vec<usize>,
    pub value_count: usize,
    pub spec: ModelSpec,
}

impl ModelHeader {
    fn for_spec(spec: &ModelSpec, value_count: usize) -> Self {
        ModelHeader {
            spec_hash: spec.hash(),
            variant: spec.variant,
            channel_plan: spec.channel_plan(),
            value_count,
            spec: spec.clone(),
        }
    }
}

/// Size in bytes of everything before the weight blob.
pub fn header_len(spec: &ModelSpec, value_count: usize) -> usize {
    let json =
        serde_json::to_vec(&ModelHeader::for_spec(spec, value_count)).expect("header serialises");
    MAGIC.len() + 1 + 4 + json.len()
}

fn stored_values(model: &Model<f32>) -> Vec<f32> {
    let mut out = Vec::with_capacity(model.stored_value_count());
    for block in &model.blocks {
        for layer in &block.layers {
            match layer {
                Layer::Conv(c) => {
                    out.extend_from_slice(&c.weight);
                    if let Some(b) = &c.bias {
                        out.extend_from_slice(b);
                    }
                }
                Layer::BatchNorm(bn) => {
                    out.extend_from_slice(&bn.gamma);
                    out.extend_from_slice(&bn.beta);
                    out.extend_from_slice(&bn.running_mean);
                    out.extend_from_slice(&bn.running_var);
                }
                Layer::Relu => {}
            }
        }
    }
    out.extend_from_slice(&model.head.weight);
    out.extend_from_slice(&model.head.bias);
    out
}

pub fn encode(model: &Model<f32>) -> Vec<u8> {
    let values = stored_values(model);
    let header = ModelHeader::for_spec(model.spec(), values.len());
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(MAGIC.len() + 5 + json.len() + values.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Reads only the header (magic, version, JSON) of an encoded model.
pub fn decode_header(bytes: &[u8]) -> Result<(ModelHeader, usize)> {
    let magic_len = MAGIC.len();
    if bytes.len() < magic_len || &bytes[..magic_len] != MAGIC {
        return Err(Error::BadMagic {
            found: bytes[..bytes.len().min(magic_len)].to_vec(),
        });
    }
    let version = *bytes.get(magic_len).ok_or(Error::Truncated {
        what: "model file",
        offset: bytes.len(),
        needed: 1,
    })?;
    if version != VERSION {
        return Err(Error::BadVersion {
            found: version,
            expected: VERSION,
        });
    }
    let len_at = magic_len + 1;
    let len_bytes: [u8; 4] = bytes
        .get(len_at..len_at + 4)
        .ok_or_else(|| Error::Truncated {
            what: "model file",
            offset: bytes.len(),
            needed: len_at + 4 - bytes.len(),
        })?
        .try_into()
        .expect("slice of length 4");
    let json_len = u32::from_le_bytes(len_bytes) as usize;
    let json_at = len_at + 4;
    let json = bytes
        .get(json_at..json_at + json_len)
        .ok_or_else(|| Error::Truncated {
            what: "model header",
            offset: bytes.len(),
            needed: json_at + json_len - bytes.len(),
        })?;
    let header: ModelHeader = serde_json::from_slice(json)?;
    let computed = header.spec.hash();
    if computed != header.spec_hash {
        return Err(Error::SpecHashMismatch {
            recorded: header.spec_hash,
            computed,
        });
    }
    Ok((header, json_at + json_len))
}

pub fn decode(bytes: &[u8]) -> Result<Model<f32>> {
    let (header, blob_at) = decode_header(bytes)?;
    let mut model = Model::<f32>::zeroed(header.spec.clone())?;
    let expected = model.stored_value_count();
    if header.value_count != expected {
        return Err(Error::invalid(
            "model file",
            format!(
                "header declares {} values, spec implies {expected}",
                header.value_count
            ),
        ));
    }
    let blob = &bytes[blob_at..];
    let need = expected * 4;
    if blob.len() < need {
        return Err(Error::Truncated {
            what: "model weights",
            offset: bytes.len(),
            needed: need - blob.len(),
        });
    }
    if blob.len() > need {
        return Err(Error::invalid(
            "model file",
            format!("{} trailing bytes after weights", blob.len() - need),
        ));
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")));
    let mut fill = |dst: &mut [f32]| {
        for d in dst {
            *d = values.next().expect("length checked above");
        }
    };
    for block in &mut model.blocks {
        for layer in &mut block.layers {
            match layer {
                Layer::Conv(c) => {
                    fill(&mut c.weight);
                    if let Some(b) = &mut c.bias {
                        fill(b);
                    }
                }
                Layer::BatchNorm(bn) => {
                    fill(&mut bn.gamma);
                    fill(&mut bn.beta);
                    fill(&mut bn.running_mean);
                    fill(&mut bn.running_var);
                }
                Layer::Relu => {}
            }
        }
    }
    fill(&mut model.head.weight);
    fill(&mut model.head.bias);
    Ok(model)
}

/// Writes the model and returns the file size in bytes.
pub fn save(model: &Model<f32>, path: impl AsRef<Path>) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode(model);
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn load(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
