use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
    pub workers: Option<usize>,
}

impl Environment {
    pub fn current(workers: Option<usize>) -> Self {
        Environment {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            workers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
    pub points_total: usize,
    pub points_computed: usize,
    pub points_reused: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    /// All grid points are present in the outputs.
    pub complete: bool,
    /// Paths relative to the output directory.
    pub files: BTreeMap<String, FileEntry>,
    pub environment: Environment,
    pub timing: Timing,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileEntry> {
    let bytes = std::fs::read(path)?;
    Ok(FileEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 })
}

/// Hash of the canonical JSON form of a config.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(cfg)?.as_bytes()))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Option<Self>> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Hashes `files` (relative to `dir`) and writes the manifest.
    pub fn write(&mut self, dir: &Path, files: &[String]) -> Result<()> {
        self.files = files
            .iter()
            .map(|f| Ok((f.clone(), hash_file(&dir.join(f))?)))
            .collect::<Result<_>>()?;
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(dir.join(MANIFEST), text + "\n")?;
        Ok(())
    }

    /// Files that are missing or whose hash no longer matches.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|(name, entry)| match hash_file(&dir.join(name)) {
                Ok(now) if now == *entry => None,
                Ok(_) => Some(format!("{name}: hash mismatch")),
                Err(_) => Some(format!("{name}: missing")),
            })
            .collect()
    }
}
