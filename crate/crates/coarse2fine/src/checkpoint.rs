//! Checkpoint archive: parameter names mapped to shapes plus raw
//! little-endian f64 data, behind a JSON header carrying the vocabulary
//! and config hashes of the run that produced it.
//!
//! Layout: 8-byte magic, u32 little-endian header length, UTF-8 JSON
//! header, then each parameter's data in header order.

use crate::error::{Error, Result};
use crate::optim::ParamSet;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"C2FCKPT\x01";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: u32,
    pub vocab_hash: String,
    pub config_hash: String,
    pub params: Vec<ParamEntry>,
}

pub fn save(
    path: impl AsRef<Path>,
    params: &ParamSet,
    vocab_hash: &str,
    config_hash: &str,
) -> Result<()> {
    let header = CheckpointHeader {
        format: 1,
        vocab_hash: vocab_hash.to_string(),
        config_hash: config_hash.to_string(),
        params: params
            .iter()
            .map(|(name, t)| ParamEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    if let Some(dir) = path.as_ref().parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(MAGIC)?;
    file.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    file.write_all(&header_bytes)?;
    for (_, t) in params.iter() {
        for v in t.data() {
            file.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamSet, CheckpointHeader)> {
    let mut file = std::fs::File::open(path.as_ref())?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint archive",
            path.as_ref().display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {}",
            header.format
        )));
    }
    let mut params = ParamSet::new();
    for entry in &header.params {
        let numel: usize = entry.shape.iter().product();
        let mut buf = vec![0u8; numel * 8];
        file.read_exact(&mut buf).map_err(|_| {
            Error::Checkpoint(format!("truncated data for parameter {:?}", entry.name))
        })?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        params.insert(&entry.name, Tensor::new(entry.shape.clone(), data));
    }
    Ok((params, header))
}
