use std::path::{Path, PathBuf};

use serde::Serialize;

/// Provenance block attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub config: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<String>, config: serde_json::Value) -> Self {
        Self { command: command.to_string(), inputs, config, seed: None, version: env!("CARGO_PKG_VERSION").to_string() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// `data.csv` → `data.manifest.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn display(p: &Path) -> String {
    p.display().to_string()
}
