//! Layering of flags over a config file over defaults.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::UsageError;

pub const SEED_ENV: &str = "D2T_SEED";

/// Settings read from a config file for one subcommand.
#[derive(Debug, Default)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub table: Map<String, Value>,
}

/// Reads a TOML file (top-level keys plus an optional `[command]` table) or
/// the `config` object of a manifest written by an earlier run.
pub fn load(path: &Path, command: &str) -> Result<FileConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let root: Value = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(other) = v.get("command").and_then(Value::as_str).filter(|c| *c != command) {
            bail!(UsageError(format!("{} is a manifest of `{other}`, not `{command}`", path.display())));
        }
        v.get("config").cloned().unwrap_or(v)
    } else {
        let t: toml::Value = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        serde_json::to_value(t)?
    };
    let Value::Object(root) = root else {
        bail!(UsageError(format!("{}: config must be a table", path.display())));
    };
    let mut table = Map::new();
    for (k, v) in &root {
        if !v.is_object() {
            table.insert(k.clone(), v.clone());
        }
    }
    if let Some(Value::Object(section)) = root.get(command) {
        table.extend(section.clone());
    }
    let seed = match table.remove("seed") {
        None => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| UsageError(format!("{}: seed must be a non-negative integer", path.display())))?,
        ),
    };
    Ok(FileConfig { seed, table })
}

/// Flags that were given win over file values.
pub fn merge<T: Serialize + DeserializeOwned>(flags: &T, file: &Map<String, Value>) -> Result<T> {
    let mut merged = file.clone();
    if let Value::Object(given) = serde_json::to_value(flags)? {
        merged.extend(given);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| UsageError(format!("config: {e}")).into())
}

/// Flag, then config file, then `D2T_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV}=`{v}` is not a non-negative integer")).into()),
        Err(_) => Ok(0),
    }
}
