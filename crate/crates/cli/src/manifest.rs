use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

/// Written as manifest.json next to the outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub scenario: String,
    /// sha256 of the config file bytes; absent when run without a config.
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub rng: &'static str,
    pub threads: Option<usize>,
    pub pass: bool,
    pub outputs: Vec<OutputEntry>,
    pub wall_seconds: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn entries(files: &[(String, Vec<u8>)]) -> Vec<OutputEntry> {
    files
        .iter()
        .map(|(name, data)| OutputEntry {
            file: name.clone(),
            bytes: data.len(),
            sha256: sha256_hex(data),
        })
        .collect()
}

/// Writes every output, then the manifest.
pub fn write_all(dir: &Path, files: &[(String, Vec<u8>)], manifest: &RunManifest) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, data) in files {
        let path = dir.join(name);
        std::fs::write(&path, data).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    std::fs::write(dir.join("manifest.json"), json).context("writing manifest.json")?;
    Ok(())
}
