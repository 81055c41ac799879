//! Binary checkpoint files: magic, format version, a JSON header describing
//! the model and parameter table, then raw little-endian `f64` data.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use muse_autograd::{ParamKind, ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::model::{ModelConfig, MuseNet};
use crate::{MuseError, Result};

pub const MAGIC: &[u8; 8] = b"MUSECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub buffer: bool,
    pub frozen: bool,
}

/// Training metadata carried alongside the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub epoch: usize,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelConfig,
    meta: CheckpointMeta,
    params: Vec<ParamEntry>,
}

pub fn to_bytes(net: &MuseNet, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let store = net.store();
    let params: Vec<ParamEntry> = store
        .ids()
        .map(|id| ParamEntry {
            name: store.name(id).to_string(),
            shape: store.get(id).shape().to_vec(),
            buffer: store.kind(id) == ParamKind::Buffer,
            frozen: store.is_frozen(id),
        })
        .collect();
    let header = Header { format_version: FORMAT_VERSION, model: net.config.clone(), meta: meta.clone(), params };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(json.len() + 8 * store.weight_count("") + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for id in store.ids() {
        for &x in store.get(id).data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<(MuseNet, CheckpointMeta)> {
    let bad = |msg: &str| MuseError::Checkpoint(msg.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(MuseError::Checkpoint(format!("unsupported format version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(20..20 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    let mut data = &bytes[20 + header_len..];
    let mut store = ParamStore::new();
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        if data.len() < 8 * n {
            return Err(MuseError::Checkpoint(format!("truncated data for `{}`", entry.name)));
        }
        let mut values = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            data.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        let t = Tensor::from_vec(&entry.shape, values)?;
        let id = if entry.buffer { store.add_buffer(&entry.name, t)? } else { store.add_weight(&entry.name, t)? };
        store.set_frozen(id, entry.frozen);
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after parameter data"));
    }
    let net = MuseNet::from_parts(header.model, store)?;
    Ok((net, header.meta))
}

pub fn save(path: &Path, net: &MuseNet, meta: &CheckpointMeta) -> Result<()> {
    let bytes = to_bytes(net, meta)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(MuseNet, CheckpointMeta)> {
    from_bytes(&fs::read(path)?)
}
