//! Run manifests.
//!
//! Every run writes a JSON manifest next to its output files. It echoes the
//! complete resolved scenario (couplings, noise amplitude, initial state,
//! grid, seed, realization count, worker count), the tool version, wall time,
//! the per-method output files, and any warnings. Feeding it back through
//! `rerun` reproduces every output file byte for byte; wall time and worker
//! count are the only fields allowed to vary between equivalent runs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse manifest: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub method: String,
    /// File name relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: Scenario,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    pub wall_ms: u64,
}

impl Manifest {
    pub fn new(scenario: Scenario) -> Manifest {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario,
            outputs: Vec::new(),
            warnings: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        let wrap = |source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(wrap)
    }

    pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
        let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}
