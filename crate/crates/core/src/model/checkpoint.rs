//! Checkpoint directories: `config.txt` (config echo), `manifest.txt` (one
//! `name file` line per tensor) and one FCT1 file per tensor.

use std::fs;
use std::path::Path;

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{read_tensor_file, write_tensor_file};

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn save_checkpoint<T: Scalar>(m: &Model<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, m.config().echo()).map_err(|e| Error::io(&cfg_path, e))?;
    let mut manifest = String::new();
    for (name, t) in m.state() {
        let file = format!("{name}.fct");
        write_tensor_file(t, dir.join(&file))?;
        manifest.push_str(&format!("{name} {file}\n"));
    }
    let man_path = dir.join(MANIFEST_FILE);
    fs::write(&man_path, manifest).map_err(|e| Error::io(&man_path, e))
}

pub fn read_checkpoint_config(dir: &Path) -> Result<ModelConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    ModelConfig::from_echo(&text)
}

/// Rebuilds the model described by the checkpoint and restores every tensor.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<Model<T>> {
    let mut m = Model::new(read_checkpoint_config(dir)?)?;
    load_weights(&mut m, dir)?;
    Ok(m)
}

/// Restores tensors into a model whose configuration matches the checkpoint.
pub fn load_weights<T: Scalar>(m: &mut Model<T>, dir: &Path) -> Result<()> {
    let saved = read_checkpoint_config(dir)?;
    if &saved != m.config() {
        return Err(Error::invalid(format!(
            "checkpoint {} was written for a different configuration",
            dir.display()
        )));
    }
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let entries: Vec<(&str, &str)> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once(' ')
                .ok_or_else(|| Error::invalid(format!("malformed manifest line {l:?}")))
        })
        .collect::<Result<_>>()?;
    let mut state = m.state_mut();
    if entries.len() != state.len() {
        return Err(Error::invalid(format!(
            "manifest lists {} tensors, model has {}",
            entries.len(),
            state.len()
        )));
    }
    for ((name, file), (expect, slot)) in entries.into_iter().zip(state.iter_mut()) {
        if name != expect {
            return Err(Error::invalid(format!(
                "manifest has {name} where {expect} belongs"
            )));
        }
        let t = read_tensor_file::<T>(dir.join(file))?;
        if t.dims() != slot.dims() {
            return Err(Error::shape(format!(
                "{name} is {:?} on disk, model expects {:?}",
                t.dims(),
                slot.dims()
            )));
        }
        **slot = t;
    }
    Ok(())
}
