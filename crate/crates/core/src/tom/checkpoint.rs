//! Checkpoint I/O.
//!
//! A checkpoint is a directory holding `manifest.json` (format version, model
//! config, and the name/shape/byte offset of every tensor) and `weights.bin`,
//! the tensors as consecutive little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, TomError};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub dtype: String,
    pub config: ModelConfig,
    pub blob: String,
    pub tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(params: &ModelParams, dir: &Path) -> Result<(), TomError> {
    fs::create_dir_all(dir)?;
    let tensors = params
        .specs()
        .iter()
        .map(|s| TensorEntry { name: s.name.clone(), shape: s.shape.clone(), offset: s.offset * 4 })
        .collect();
    let manifest = Manifest {
        version: FORMAT_VERSION,
        dtype: "f32-le".into(),
        config: params.config().clone(),
        blob: BLOB_FILE.into(),
        tensors,
    };
    let mut blob = Vec::with_capacity(params.num_params() * 4);
    for &x in params.as_slice() {
        blob.extend_from_slice(&(x as f32).to_le_bytes());
    }
    fs::write(dir.join(BLOB_FILE), blob)?;
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| TomError::Manifest(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), json)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelParams, TomError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| TomError::Manifest(e.to_string()))?;
    let version = raw.get("version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
    if version != FORMAT_VERSION {
        return Err(TomError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| TomError::Manifest(e.to_string()))?;
    if manifest.dtype != "f32-le" {
        return Err(TomError::Manifest(format!("unsupported dtype {}", manifest.dtype)));
    }
    let template = ModelParams::zeros(manifest.config.clone())?;
    if manifest.tensors.len() != template.specs().len() {
        return Err(TomError::ShapeMismatch(format!(
            "manifest lists {} tensors, config implies {}",
            manifest.tensors.len(),
            template.specs().len()
        )));
    }
    for (entry, spec) in manifest.tensors.iter().zip(template.specs()) {
        if entry.name != spec.name || entry.shape != spec.shape {
            return Err(TomError::ShapeMismatch(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, spec.name, spec.shape
            )));
        }
    }
    let blob = fs::read(dir.join(&manifest.blob))?;
    let expected = manifest
        .tensors
        .iter()
        .map(|t| t.offset + 4 * t.shape.iter().product::<usize>())
        .max()
        .unwrap_or(0);
    if blob.len() < expected {
        return Err(TomError::Truncated { expected, found: blob.len() });
    }
    let mut data = vec![0.0; template.num_params()];
    for (entry, spec) in manifest.tensors.iter().zip(template.specs()) {
        let bytes = &blob[entry.offset..entry.offset + 4 * spec.len()];
        for (dst, chunk) in data[spec.range()].iter_mut().zip(bytes.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
        }
    }
    ModelParams::from_parts(manifest.config, data)
}
