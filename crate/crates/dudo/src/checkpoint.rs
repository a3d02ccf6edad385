//! Parameter checkpoints: one tensor file per parameter and an
//! `index.json` mapping names to files.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dudo_core::diff::ParamStore;
use dudo_core::model::DuDoUniNeXt;
use dudo_core::nn::Module;
use dudo_core::Real;

use crate::error::{CliError, CliResult};
use crate::tensor_io::{load_tensor, save_tensor};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointIndex {
    pub dtype: String,
    pub params: Vec<IndexEntry>,
}

pub fn save_checkpoint<T: Real>(dir: &Path, params: &ParamStore<T>) -> CliResult<CheckpointIndex> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut entries = Vec::with_capacity(params.len());
    for (i, (name, t)) in params.iter().enumerate() {
        let file = format!("p{i:04}.ddut");
        save_tensor(&dir.join(&file), t)?;
        entries.push(IndexEntry { name: name.to_string(), file, shape: t.shape().to_vec() });
    }
    let index = CheckpointIndex { dtype: format!("{:?}", T::DTYPE).to_lowercase(), params: entries };
    let path = dir.join(INDEX_FILE);
    let json = serde_json::to_string_pretty(&index).expect("index serialises");
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(index)
}

/// Loads every tensor listed in the index, converting to `T`.
pub fn load_checkpoint<T: Real>(dir: &Path) -> CliResult<ParamStore<T>> {
    let path = dir.join(INDEX_FILE);
    let doc = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let index: CheckpointIndex = serde_json::from_str(&doc).map_err(|e| CliError::format(&path, e.to_string()))?;
    let mut store = ParamStore::new();
    for e in &index.params {
        if e.file.contains(['/', '\\']) || e.file.starts_with('.') {
            return Err(CliError::format(&path, format!("illegal tensor file name `{}`", e.file)));
        }
        let file = dir.join(&e.file);
        let t = load_tensor::<T>(&file)?;
        if t.shape() != e.shape.as_slice() {
            return Err(CliError::format(&file, format!("shape {:?} does not match the index {:?}", t.shape(), e.shape)));
        }
        store.insert(e.name.clone(), t).map_err(|err| CliError::format(&path, err.to_string()))?;
    }
    Ok(store)
}

/// Reorders `loaded` into the model's parameter order, checking that every
/// name is present with the right shape and nothing is left over.
pub fn bind_to_model<T: Real>(model: &DuDoUniNeXt, loaded: &ParamStore<T>, origin: &Path) -> CliResult<ParamStore<T>> {
    let mut seen = std::collections::BTreeSet::new();
    let specs: Vec<_> = model.param_specs().into_iter().filter(|s| seen.insert(s.name.clone())).collect();
    if specs.len() != loaded.len() {
        return Err(CliError::format(
            origin,
            format!("checkpoint has {} parameters, the model needs {}", loaded.len(), specs.len()),
        ));
    }
    let mut out = ParamStore::new();
    for s in &specs {
        let t = loaded
            .get(&s.name)
            .ok_or_else(|| CliError::format(origin, format!("missing parameter `{}`", s.name)))?;
        if t.shape() != s.shape.as_slice() {
            return Err(CliError::format(
                origin,
                format!("parameter `{}` has shape {:?}, the model needs {:?}", s.name, t.shape(), s.shape),
            ));
        }
        out.insert(s.name.clone(), t.clone()).map_err(|e| CliError::format(origin, e.to_string()))?;
    }
    Ok(out)
}
