//! Append-only run manifests.
//!
//! Each artifact-producing run appends one JSON line to `manifest.jsonl` in
//! its output directory. Timestamps are the only nondeterministic fields.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::sha256_hex;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// SHA-256 of the canonical configuration text (after env overrides).
    pub config_hash: String,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub started: String,
    pub finished: String,
    /// Output path (relative to the run directory) to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of every regular file under `path`, keyed by path relative to it,
/// or of `path` itself when it is a file.
pub fn hash_tree(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    if path.is_file() {
        out.insert(path.display().to_string(), hash_file(path)?);
        return Ok(out);
    }
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = path.join(&rel);
        let rd = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let rel = rel.join(entry.file_name());
            let full = path.join(&rel);
            if full.is_dir() {
                stack.push(rel);
            } else if rel.as_os_str() != MANIFEST_FILE {
                out.insert(rel.display().to_string(), hash_file(&full)?);
            }
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn append(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut f =
            std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
        let line = serde_json::to_string(self)?;
        writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
    }

    pub fn read_all(dir: &Path) -> Result<Vec<Self>> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Parse { path: path.clone(), message: e.to_string() }))
            .collect()
    }
}
