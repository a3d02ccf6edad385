//! Per-run manifest recording what was produced and from which inputs.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Path relative to the manifest's directory.
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub preview: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub precision: String,
    pub artifacts: Vec<Artifact>,
    /// Command-specific scalars such as the acceleration or a stream hash.
    pub details: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64, precision: &str) -> Self {
        Manifest {
            command: command.into(),
            config_hash,
            seed,
            precision: precision.into(),
            artifacts: Vec::new(),
            details: Map::new(),
        }
    }

    pub fn artifact(&mut self, name: &str, path: &str, preview: Option<&str>) {
        self.artifacts.push(Artifact { name: name.into(), path: path.into(), preview: preview.map(Into::into) });
    }

    pub fn detail(&mut self, key: &str, value: impl Into<Value>) {
        self.details.insert(key.into(), value.into());
    }

    pub fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).expect("manifest serialises");
        fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let doc = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&doc).map_err(|e| CliError::format(&path, e.to_string()))
    }
}

/// JSON number for finite values and the string `"inf"` (or `"-inf"`,
/// `"nan"`) otherwise.
pub fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| Value::String(format!("{x}")))
}
