//! Config-file merging and the run manifest written next to every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    /// Effective settings; pass this file back with `--config` to rerun.
    pub config: Value,
    pub seeds: BTreeMap<String, u64>,
    pub jobs: usize,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Wall-clock milliseconds; the only non-reproducible content.
    pub timings: BTreeMap<String, f64>,
}

pub fn digest(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(FileDigest { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
}

pub fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>, CliError> {
    paths.iter().map(|p| digest(p)).collect()
}

/// Reads `--config`: either a flat object of flag values or a run manifest,
/// whose `config` entry is used. Returns the object.
pub fn read_config(path: &Path, command: &str) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(mut obj) = value else {
        return Err(CliError::Usage(format!("{}: config must be a JSON object", path.display())));
    };
    if let (Some(Value::String(cmd)), Some(Value::Object(_))) = (obj.get("command"), obj.get("config")) {
        if cmd != command {
            return Err(CliError::Usage(format!("manifest is for '{cmd}', not '{command}'")));
        }
        let Some(Value::Object(inner)) = obj.remove("config") else { unreachable!() };
        return Ok(inner);
    }
    Ok(obj)
}

fn non_null(value: Value) -> Map<String, Value> {
    match value {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Overlays command-line values on the config file. Keys the command does
/// not know are rejected.
pub fn merge<T: Serialize + DeserializeOwned + Default>(cli: &T, file: Option<Map<String, Value>>) -> Result<(T, Value), CliError> {
    let known = match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    };
    let mut merged = Map::new();
    if let Some(file) = file {
        for (k, v) in file {
            let key = k.replace('_', "-");
            if !known.contains_key(&key) {
                return Err(CliError::Usage(format!("unknown config key '{k}'")));
            }
            if !v.is_null() {
                merged.insert(key, v);
            }
        }
    }
    let cli_values = serde_json::to_value(cli).map_err(|e| CliError::Usage(e.to_string()))?;
    merged.extend(non_null(cli_values));
    let value = Value::Object(merged);
    let args = serde_json::from_value(value.clone()).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    Ok((args, value))
}
