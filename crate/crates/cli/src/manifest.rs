//! Run manifests: what was run, with which settings, on which inputs, and
//! the checksum of everything written. Contains no timestamps, so
//! identical runs produce identical manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliResult;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: PipelineConfig,
    pub inputs: Vec<FileRecord>,
    pub artifacts: Vec<FileRecord>,
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(hex, "{b:02x}");
    }
    Ok(hex)
}

fn display_path(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Collects inputs and artifacts while a command runs.
#[derive(Debug)]
pub struct RunRecorder {
    command: String,
    out_dir: PathBuf,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    artifacts: Vec<PathBuf>,
    warnings: Vec<String>,
}

impl RunRecorder {
    pub fn new(command: &str, out_dir: PathBuf) -> Self {
        Self {
            command: command.to_string(),
            out_dir,
            seed: None,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    /// Path under the output directory, with parents created.
    pub fn output(&self, relative: impl AsRef<Path>) -> CliResult<PathBuf> {
        let p = self.out_dir.join(relative);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(p)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) {
        self.inputs.push(path.into());
    }

    pub fn artifact(&mut self, path: impl Into<PathBuf>) {
        self.artifacts.push(path.into());
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    /// Hash everything and write `manifest.json` into the output directory.
    pub fn finish(self, config: &PipelineConfig) -> CliResult<PathBuf> {
        let mut inputs = Vec::with_capacity(self.inputs.len());
        for p in &self.inputs {
            inputs.push(FileRecord {
                path: display_path(p),
                sha256: sha256_file(p)?,
            });
        }
        let mut artifacts = Vec::with_capacity(self.artifacts.len());
        for p in &self.artifacts {
            let rel = p.strip_prefix(&self.out_dir).unwrap_or(p);
            artifacts.push(FileRecord {
                path: display_path(rel),
                sha256: sha256_file(p)?,
            });
        }
        inputs.sort();
        inputs.dedup();
        artifacts.sort();
        artifacts.dedup();
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            config: config.clone(),
            inputs,
            artifacts,
            warnings: self.warnings,
        };
        let path = self.out_dir.join(MANIFEST_FILE);
        std::fs::create_dir_all(&self.out_dir)?;
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }
}
