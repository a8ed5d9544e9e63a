//! Model checkpoints.
//!
//! ```text
//! magic   b"RVCK"
//! version u32
//! hlen    u32   length of the JSON header
//! header  JSON  {config, tensors: [{name, shape}]}
//! data    f32 LE weights, tensors in header order
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{Model, ModelConfig};
use super::Parameters;
use crate::error::{Error, IoContext, Result};
use crate::store::read_u32;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorInfo>,
}

pub fn checkpoint_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    model.visit("", &mut |name, shape, values| {
        tensors.push(TensorInfo { name, shape });
        for v in values {
            data.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    });
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    Ok(out)
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let mut input = bytes;
    if input.len() < 12 || &input[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    input = &input[4..];
    let version = read_u32(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let hlen = read_u32(&mut input)? as usize;
    if input.len() < hlen {
        return Err(Error::Format("truncated checkpoint header".into()));
    }
    let header: Header = serde_json::from_slice(&input[..hlen])?;
    let data = &input[hlen..];
    let mut model = Model::new(header.config, 0)?;
    let mut expected = Vec::new();
    model.visit("", &mut |name, shape, _| expected.push((name, shape)));
    let found: Vec<(String, Vec<usize>)> = header
        .tensors
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    if expected != found {
        return Err(Error::Format(
            "checkpoint tensors do not match the model layout".into(),
        ));
    }
    let n = model.param_count();
    if data.len() != 4 * n {
        return Err(Error::Format(format!(
            "checkpoint holds {} weight bytes, expected {}",
            data.len(),
            4 * n
        )));
    }
    let flat: Vec<f64> = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")) as f64)
        .collect();
    model.set_flat(&flat);
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)?).at(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    model_from_bytes(&std::fs::read(path).at(path)?)
}
