//! Experiment configuration: a flat TOML table, overridden key by key from the
//! command line and resolved into a typed struct.
//!
//! Grammar: every key is a top-level TOML key (`members = 10`,
//! `deltas = [1.0, 1.005]`). An override `key=value` parses `value` as a TOML
//! value; if that fails it is taken as a bare string. Unknown keys are
//! rejected when the table is resolved.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{Error, Result};

/// Raw key-value configuration before resolution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigTable {
    table: Table,
}

impl ConfigTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        if let Some((k, _)) = table.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!("key `{k}`: nested tables are not supported")));
        }
        Ok(Self { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.table.insert(key.to_owned(), value);
    }

    /// Apply one `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{spec}` is not of the form key=value")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("override `{spec}` has an empty key")));
        }
        self.set(key, parse_value(raw.trim()));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.table.get(key)
    }

    /// Deserialize into `T`, filling absent keys from `T::default()`.
    pub fn resolve<T: DeserializeOwned>(&self) -> Result<T> {
        Value::Table(self.table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))
    }
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Hex SHA-256 of the canonical TOML rendering of a resolved config.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let text = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
