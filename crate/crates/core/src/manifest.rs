//! Content-hash manifest of the artifacts in a run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats::{read_bytes, write_bytes, write_json};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub sha256: String,
    pub bytes: u64,
    /// Command that produced the file.
    pub command: String,
    /// Fingerprint of the run configuration used.
    pub config: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub details: BTreeMap<String, serde_json::Value>,
}

/// Entries keyed by path relative to the run directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl ArtifactManifest {
    /// Loads the manifest of `root`, or an empty one if none exists yet.
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        crate::formats::read_json(&path)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        write_json(&root.join(MANIFEST_FILE), self)
    }

    /// Writes `bytes` to `root/name` and records its hash.
    pub fn write(&mut self, root: &Path, name: &str, bytes: &[u8], command: &str, config: &str) -> Result<()> {
        write_bytes(&root.join(name), bytes)?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactEntry {
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
                command: command.to_string(),
                config: config.to_string(),
                details: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn set_detail(&mut self, name: &str, key: &str, value: serde_json::Value) {
        if let Some(entry) = self.artifacts.get_mut(name) {
            entry.details.insert(key.to_string(), value);
        }
    }

    /// Reads `root/name` and checks it against the recorded hash.
    pub fn read_verified(&self, root: &Path, name: &str) -> Result<Vec<u8>> {
        let path: PathBuf = root.join(name);
        let entry = self
            .artifacts
            .get(name)
            .ok_or_else(|| Error::MissingPrerequisite(format!("{name} (not recorded in {})", root.join(MANIFEST_FILE).display())))?;
        if !path.exists() {
            return Err(Error::MissingPrerequisite(path.display().to_string()));
        }
        let bytes = read_bytes(&path)?;
        let actual = sha256_hex(&bytes);
        if actual != entry.sha256 {
            return Err(Error::HashMismatch {
                path: path.display().to_string(),
                expected: entry.sha256.clone(),
                actual,
            });
        }
        Ok(bytes)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.artifacts.contains_key(name)
    }
}
