//! Run manifests: every subcommand records its effective configuration, input
//! digests, and artifact paths. Manifests carry no wall-clock fields, so a
//! rerun with identical inputs writes an identical manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use greensentry_core::error::Result;

use crate::config::RunConfig;

#[derive(Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
    /// Command-specific effective values (e.g. the injection spec).
    pub details: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        Manifest {
            command: command.to_owned(),
            seed: config.seed,
            config,
            details: serde_json::Value::Null,
            inputs: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn record_details(&mut self, details: serde_json::Value) {
        self.details = details;
    }

    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn record_artifact(&mut self, path: &Path) {
        self.artifacts.push(
            path.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
