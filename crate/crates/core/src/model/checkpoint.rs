//! On-disk checkpoints: a JSON manifest plus one little-endian f64 blob per tensor.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/layer.0.weight.bin
//! <dir>/layer.0.bias.bin
//! ...
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dense, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::features::SocioSchema;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ModelSpec,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    /// Annotator -> head row, for per-annotator heads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<BTreeMap<String, usize>>,
    /// Schema the multi-hot inputs were encoded with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<SocioSchema>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ModelParams,
}

fn blob(values: impl Iterator<Item = f64>) -> Vec<u8> {
    values.flat_map(f64::to_le_bytes).collect()
}

fn unblob(bytes: &[u8], expected: usize, name: &str) -> Result<Vec<f64>> {
    if bytes.len() != expected * 8 {
        return Err(Error::Format {
            row: 0,
            message: format!("tensor {name}: expected {} bytes, found {}", expected * 8, bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub fn save(
    dir: &Path,
    spec: &ModelSpec,
    params: &ModelParams,
    seed: u64,
    heads: Option<&BTreeMap<String, usize>>,
    schema: Option<&SocioSchema>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    for (i, layer) in params.layers.iter().enumerate() {
        let w = format!("layer.{i}.weight");
        let b = format!("layer.{i}.bias");
        write(dir, &w, &blob(layer.weight.iter().copied()))?;
        write(dir, &b, &blob(layer.bias.iter().copied()))?;
        tensors.push(TensorEntry {
            name: w,
            shape: layer.weight.shape().to_vec(),
        });
        tensors.push(TensorEntry {
            name: b,
            shape: vec![layer.bias.len()],
        });
    }
    let manifest = Manifest {
        spec: spec.clone(),
        seed,
        step: params.step,
        tensors,
        heads: heads.cloned(),
        schema: schema.cloned(),
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest)?;
    std::fs::write(&path, json).map_err(|e| Error::io(path, e))
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(format!("{name}.bin"));
    std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads parameters; optimizer moments are not persisted and come back zeroed.
pub fn load(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(MANIFEST);
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    manifest.spec.validate()?;
    let mut params = ModelParams::zeros(&manifest.spec);
    params.step = manifest.step;
    for (i, (out, inp)) in manifest.spec.layer_shapes().into_iter().enumerate() {
        let read = |name: String, n: usize| -> Result<Vec<f64>> {
            let p = dir.join(format!("{name}.bin"));
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            unblob(&bytes, n, &name)
        };
        let w = read(format!("layer.{i}.weight"), out * inp)?;
        let b = read(format!("layer.{i}.bias"), out)?;
        params.layers[i] = Dense {
            weight: Array2::from_shape_vec((out, inp), w).map_err(|e| Error::Contract(e.to_string()))?,
            bias: Array1::from(b),
        };
    }
    if !params.all_finite() {
        return Err(Error::Numeric(format!("checkpoint {} holds non-finite values", dir.display())));
    }
    Ok(Checkpoint { manifest, params })
}
