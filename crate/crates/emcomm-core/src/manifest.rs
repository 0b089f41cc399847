//! Run manifests: enough provenance to reproduce any artifact bit-exactly.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io;
use std::path::Path;

/// Provenance record written next to every command's outputs. Contains no
/// timestamps, so identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// Full effective configuration (TOML rendered to a JSON value).
    pub config: serde_json::Value,
    /// SHA-256 of each input file, keyed by role (e.g. "config", "data").
    pub input_hashes: std::collections::BTreeMap<String, String>,
    pub output_paths: Vec<String>,
    /// Free-form mode notes (e.g. baseline selection).
    pub notes: std::collections::BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, seed: u64, config: serde_json::Value) -> Self {
        Self {
            schema_version: 1,
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            input_hashes: Default::default(),
            output_paths: Vec::new(),
            notes: Default::default(),
        }
    }

    pub fn with_input(mut self, role: &str, path: &Path) -> io::Result<Self> {
        self.input_hashes
            .insert(role.to_string(), sha256_file(path)?);
        Ok(self)
    }

    pub fn with_output(mut self, path: &Path) -> Self {
        self.output_paths.push(path.display().to_string());
        self
    }

    pub fn note(mut self, key: &str, value: impl Into<String>) -> Self {
        self.notes.insert(key.to_string(), value.into());
        self
    }

    /// Writes atomically: temp file in the same directory, then rename.
    pub fn write_atomic(&self, path: &Path) -> io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, json.as_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(sha256_bytes(&bytes))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
