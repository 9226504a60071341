//! Run manifests: one JSON file per command invocation recording what ran,
//! on which inputs, and what it produced. Digests make reruns auditable;
//! timestamps live only here, so the data outputs themselves stay
//! byte-identical across reruns with the same seed.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved settings after presets, config files, and flags.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub duration_ms: u128,
}

/// Collects inputs and outputs while a command runs, then writes
/// `<command>-manifest.json` into the output directory.
pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
    outputs: Vec<String>,
    started_unix_ms: u128,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: serde_json::Value::Null,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, config: serde_json::Value) {
        self.config = config;
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    /// Records an input file along with its content digest.
    pub fn input(&mut self, path: &Path) -> anyhow::Result<String> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256.clone(),
        });
        Ok(sha256)
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn write(self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        let manifest = RunManifest {
            duration_ms: self.started.elapsed().as_millis(),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self.started_unix_ms,
        };
        let path = out_dir.join(format!("{}-manifest.json", manifest.command));
        let body = serde_json::to_string_pretty(&manifest).context("serializing manifest")?;
        std::fs::write(&path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let mut file = std::fs::File::open(path)
        .with_context(|| format!("opening {} for digest", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file
            .read(&mut buf)
            .with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}
