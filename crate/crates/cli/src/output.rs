//! Artifact writing and the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Format, OutputBlock};
use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Hash of the effective configuration, output directory excluded.
    pub config_sha256: String,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Drops keys whose values vary between identical runs.
fn strip_volatile(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Object(map) => {
            map.remove("wall_time_s");
            map.values_mut().for_each(strip_volatile);
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

pub struct Output {
    dir: PathBuf,
    block: OutputBlock,
    artifacts: Vec<Artifact>,
}

impl Output {
    pub fn create(dir: &Path, block: &OutputBlock) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            block: block.clone(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn wants(&self, f: Format) -> bool {
        self.block.wants(f)
    }

    /// `name` must be a bare file name; nothing is written outside the directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') || name == MANIFEST {
            return Err(CliError::Format(format!("invalid artifact name {name:?}")));
        }
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Format(e.to_string()))?;
        strip_volatile(&mut v);
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn finish(mut self, command: &str, seed: u64, config_sha256: String) -> Result<Manifest, CliError> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            config_sha256,
            artifacts: self.artifacts,
        };
        let path = self.dir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Format(e.to_string()))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}
