//! On-disk checkpoints: a TOML `manifest` plus one tensor file per
//! named parameter.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ModelParams, OperatorConfig, OperatorError};
use crate::diffcore::io::{read_tensor, write_tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: OperatorConfig,
    pub params: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
}

fn ckpt_err(dir: &Path, detail: impl std::fmt::Display) -> OperatorError {
    OperatorError::Checkpoint(format!("{}: {detail}", dir.display()))
}

pub fn save_checkpoint(params: &ModelParams, dir: &Path) -> Result<(), OperatorError> {
    fs::create_dir_all(dir).map_err(|e| ckpt_err(dir, e))?;
    let mut entries = Vec::new();
    for (name, t) in params.named() {
        let file = format!("{name}.bin");
        write_tensor(&dir.join(&file), t)?;
        entries.push(ParamEntry {
            name,
            shape: t.shape().to_vec(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_VERSION,
        seed: params.seed,
        config: params.config.clone(),
        params: entries,
    };
    let text = toml::to_string(&manifest).map_err(|e| ckpt_err(dir, e))?;
    fs::write(dir.join("manifest"), text).map_err(|e| ckpt_err(dir, e))
}

pub fn read_checkpoint_manifest(dir: &Path) -> Result<CheckpointManifest, OperatorError> {
    let text = fs::read_to_string(dir.join("manifest")).map_err(|e| ckpt_err(dir, e))?;
    let manifest: CheckpointManifest = toml::from_str(&text).map_err(|e| ckpt_err(dir, e))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(ckpt_err(
            dir,
            format!(
                "format_version {} is not supported (expected {CHECKPOINT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<ModelParams, OperatorError> {
    let manifest = read_checkpoint_manifest(dir)?;
    let mut tensors = IndexMap::new();
    for entry in &manifest.params {
        if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
            return Err(ckpt_err(dir, format!("parameter file `{}` escapes the checkpoint", entry.file)));
        }
        let t = read_tensor(&dir.join(&entry.file))?;
        if t.shape() != entry.shape.as_slice() {
            return Err(ckpt_err(
                dir,
                format!("`{}` has shape {:?}, manifest declares {:?}", entry.name, t.shape(), entry.shape),
            ));
        }
        tensors.insert(entry.name.clone(), t);
    }
    ModelParams::from_named(&manifest.config, manifest.seed, tensors).map_err(|e| ckpt_err(dir, e))
}
