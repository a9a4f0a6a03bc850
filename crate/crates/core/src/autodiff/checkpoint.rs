//! Parameter checkpoints: a JSON manifest mapping tensor names to shapes, and a
//! sibling binary file holding every tensor as little-endian `f64`, concatenated
//! in manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::{AutodiffError, ParamSet, Tensor};

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn save_checkpoint(params: &ParamSet, header: Option<&Value>, stem: &Path) -> Result<(), AutodiffError> {
    let (json_path, bin_path) = paths(stem);
    let mut tensors = Map::new();
    let mut blob = Vec::with_capacity(params.numel() * 8);
    for (name, t) in params.iter() {
        tensors.insert(name.to_string(), Value::from(t.shape().to_vec()));
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut manifest = Map::new();
    if let Some(h) = header {
        manifest.insert("header".into(), h.clone());
    }
    manifest.insert("tensors".into(), Value::Object(tensors));
    let text = serde_json::to_string_pretty(&Value::Object(manifest))
        .map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    fs::write(&json_path, text).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", json_path.display())))?;
    fs::write(&bin_path, blob).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", bin_path.display())))?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`], returning the parameters
/// and the optional header.
pub fn load_checkpoint(stem: &Path) -> Result<(ParamSet, Option<Value>), AutodiffError> {
    let (json_path, bin_path) = paths(stem);
    let text = fs::read_to_string(&json_path)
        .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", json_path.display())))?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
    let blob = fs::read(&bin_path).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", bin_path.display())))?;
    let tensors = manifest
        .get("tensors")
        .and_then(Value::as_object)
        .ok_or_else(|| AutodiffError::Checkpoint("manifest has no tensors map".into()))?;
    let mut params = ParamSet::new();
    let mut offset = 0;
    for (name, shape) in tensors {
        let shape: Vec<usize> = serde_json::from_value(shape.clone())
            .map_err(|e| AutodiffError::Checkpoint(format!("shape of {name}: {e}")))?;
        let n: usize = shape.iter().product();
        let end = offset + n * 8;
        if end > blob.len() {
            return Err(AutodiffError::Checkpoint(format!("blob too short for tensor {name}")));
        }
        let data = blob[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        params.add(name.clone(), Tensor::new(shape, data)?);
        offset = end;
    }
    if offset != blob.len() {
        return Err(AutodiffError::Checkpoint(format!(
            "blob has {} trailing bytes",
            blob.len() - offset
        )));
    }
    Ok((params, manifest.get("header").cloned()))
}
