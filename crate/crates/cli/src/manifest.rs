use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use simstore::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub simstore_version: &'static str,
    pub config_path: Option<PathBuf>,
    pub config_sha256: Option<String>,
    /// Effective configuration after defaults were applied.
    pub resolved: serde_json::Value,
    pub seed: u64,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            simstore_version: env!("CARGO_PKG_VERSION"),
            config_path: None,
            config_sha256: None,
            resolved: serde_json::Value::Null,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn config(&mut self, path: &Path, text: &str) {
        self.config_path = Some(path.to_path_buf());
        self.config_sha256 = Some(sha256_hex(text.as_bytes()));
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) {
        if !self.resolved.is_object() {
            self.resolved = serde_json::Value::Object(Default::default());
        }
        let v = serde_json::to_value(value).expect("resolved config serializes");
        self.resolved.as_object_mut().expect("object").insert(key.into(), v);
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileEntry {
            path: path.to_path_buf(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileEntry {
            path: path.to_path_buf(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
