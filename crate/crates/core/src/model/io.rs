//! Model container.
//!
//! ```text
//! magic      8 bytes  "EAMMODEL"
//! version    u32 LE   (1)
//! header_len u64 LE
//! header     JSON     { "graph": .., "params": [{name, shape, trainable, offset}] }
//! payload    f64 LE   all parameter values back to back, `offset` in values
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::NetworkGraph;
use super::params::ParamStore;
use super::Model;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 8] = b"EAMMODEL";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    graph: NetworkGraph,
    params: Vec<ParamRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamRecord {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    offset: usize,
}

pub(crate) fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut records = Vec::with_capacity(model.params.len());
    let mut payload = Vec::new();
    let mut offset = 0;
    for (name, entry) in model.params.iter() {
        records.push(ParamRecord {
            name: name.to_owned(),
            shape: entry.tensor.shape().to_vec(),
            trainable: entry.trainable,
            offset,
        });
        for v in entry.tensor.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        offset += entry.tensor.numel();
    }
    let header = serde_json::to_vec(&Header { graph: model.graph.clone(), params: records })
        .map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(20 + header.len() + payload.len());
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub(crate) fn decode(bytes: &[u8]) -> Result<Model> {
    let fail = |m: &str| Error::Format(m.to_owned());
    if bytes.len() < 20 || &bytes[..8] != MODEL_MAGIC {
        return Err(fail("missing EAMMODEL magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if body.len() < header_len {
        return Err(fail("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..header_len]).map_err(|e| Error::Format(e.to_string()))?;
    let payload = &body[header_len..];
    if !payload.len().is_multiple_of(8) {
        return Err(fail("payload is not a whole number of f64 values"));
    }
    let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let mut params = ParamStore::default();
    for rec in header.params {
        let n: usize = rec.shape.iter().product();
        let end = rec.offset.checked_add(n).filter(|&e| e <= values.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("parameter {} overruns the payload", rec.name)));
        };
        let t = Tensor::new(&rec.shape, values[rec.offset..end].to_vec())?;
        params.insert(rec.name, t, rec.trainable);
    }
    Model::with_params(header.graph, params)
}

/// Writes the model atomically (temporary file, then rename).
pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
