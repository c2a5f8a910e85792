//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `KANTSC01`, the manifest length as a little-endian
//! u64, a JSON manifest, then every tensor as little-endian f64 values. The
//! manifest records each tensor's name, shape and byte offset into the blob, so
//! a reader in any language can recover the model bit for bit.

use kantsc::{build_model, Error, Layer, Model, ModelConfig, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"KANTSC01";
pub const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob that follows the manifest.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelConfig,
    pub dtype: String,
    /// Seed of the training run that produced the weights.
    pub seed: u64,
    /// Number of completed training epochs.
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Parameters followed by batch-norm running statistics.
fn named_state(model: &Model) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out: Vec<_> = model
        .params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.shape().to_vec(), p.value.data().to_vec()))
        .collect();
    for (name, buf) in model.buffers() {
        out.push((name, vec![buf.len()], buf.to_vec()));
    }
    out
}

pub fn encode(model: &Model, seed: u64, epoch: usize) -> Result<Vec<u8>> {
    let state = named_state(model);
    let mut tensors = Vec::with_capacity(state.len());
    let mut offset = 0u64;
    for (name, shape, data) in &state {
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: shape.clone(),
            offset,
        });
        offset += 8 * data.len() as u64;
    }
    let manifest = Manifest {
        model: model.config().clone(),
        dtype: DTYPE.into(),
        seed,
        epoch,
        tensors,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in &state {
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Reads the manifest without building the model.
pub fn read_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    let bad = |why: &str| Error::Checkpoint(why.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing KANTSC01 magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("manifest length exceeds file size"))?;
    let manifest: Manifest =
        serde_json::from_slice(&bytes[16..end]).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if manifest.dtype != DTYPE {
        return Err(bad(&format!("unsupported dtype {:?}", manifest.dtype)));
    }
    Ok((manifest, &bytes[end..]))
}

pub fn decode(bytes: &[u8]) -> Result<(Model, Manifest)> {
    let (manifest, blob) = read_manifest(bytes)?;
    let mut model = build_model(&manifest.model)
        .map_err(|e| Error::Checkpoint(format!("manifest holds an invalid model config: {e}")))?;
    let expected: Vec<(String, Vec<usize>)> = named_state(&model).into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, the model has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut values = Vec::with_capacity(expected.len());
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name || *shape != entry.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {} {:?} does not match the model's {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + 8 * numel(shape);
        let raw = blob
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} runs past the end of the file")))?;
        values.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect::<Vec<f64>>(),
        );
    }
    let n_params = model.params().len();
    let (param_vals, buffer_vals) = values.split_at(n_params);
    for (p, v) in model.params_mut().into_iter().zip(param_vals) {
        p.value.data_mut().copy_from_slice(v);
    }
    for ((_, buf), v) in model.buffers_mut().into_iter().zip(buffer_vals) {
        buf.copy_from_slice(v);
    }
    model.set_train(false);
    Ok((model, manifest))
}

pub fn save(path: impl AsRef<Path>, model: &Model, seed: u64, epoch: usize) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(model, seed, epoch)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Model, Manifest)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
        other => other,
    })
}
