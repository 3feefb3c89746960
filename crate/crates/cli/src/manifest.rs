use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use zsc_core::executor::CostWeights;

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Written next to a command's outputs, once before the work starts and
/// again with the final file inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seeds: BTreeMap<String, u64>,
    pub config_digests: BTreeMap<String, String>,
    pub weights: Option<CostWeights>,
    pub complete: bool,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> RunManifest {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            args,
            seeds: BTreeMap::new(),
            config_digests: BTreeMap::new(),
            weights: None,
            complete: false,
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.config_digests.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Lists every file under `root` (recursively, sorted), skipping the
    /// manifest itself, then marks the run complete.
    pub fn finish(&mut self, root: &Path, files: &[PathBuf]) -> Result<()> {
        let mut all = Vec::new();
        for f in files {
            collect(f, &mut all)?;
        }
        all.sort();
        all.dedup();
        self.outputs = all
            .iter()
            .filter(|p| p.file_name().is_some_and(|n| n != MANIFEST_FILE))
            .map(|p| {
                let rel = p.strip_prefix(root).unwrap_or(p);
                Ok(FileDigest {
                    path: rel.display().to_string(),
                    bytes: std::fs::metadata(p)?.len(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<_>>()?;
        self.complete = true;
        Ok(())
    }
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_dir() {
        for entry in std::fs::read_dir(path)? {
            collect(&entry?.path(), out)?;
        }
    } else if path.exists() {
        out.push(path.to_path_buf());
    }
    Ok(())
}
