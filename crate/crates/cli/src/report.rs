//! Experiment report: scalar results, output-file manifest with content
//! hashes, and the echoed configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    /// Named scalar results, in deterministic (sorted) order.
    pub scalars: BTreeMap<String, f64>,
    /// Named string results (e.g. the best-ranked metric).
    pub strings: BTreeMap<String, String>,
    pub files: Vec<FileEntry>,
    /// Wall-clock milliseconds; excluded from reproducibility comparisons.
    pub wall_ms: u128,
    /// The configuration that produced this report, as TOML.
    pub config_echo: String,
}

impl ExperimentReport {
    pub fn new(experiment: &str, config_echo: String) -> Self {
        ExperimentReport {
            schema_version: crate::config::SCHEMA_VERSION,
            experiment: experiment.to_string(),
            scalars: BTreeMap::new(),
            strings: BTreeMap::new(),
            files: Vec::new(),
            wall_ms: 0,
            config_echo,
        }
    }

    pub fn scalar(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }

    pub fn string(&mut self, name: &str, value: &str) {
        self.strings.insert(name.to_string(), value.to_string());
    }

    /// Register an already-written output file in the manifest.
    pub fn add_file(&mut self, out_dir: &Path, rel_path: &str) -> Result<(), CliError> {
        let full = out_dir.join(rel_path);
        let data = fs::read(&full)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", full.display())))?;
        let mut hasher = Sha256::new();
        hasher.update(&data);
        let digest = hasher.finalize();
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.files.push(FileEntry {
            path: rel_path.to_string(),
            sha256: hex,
            bytes: data.len() as u64,
        });
        Ok(())
    }

    /// Serialize to `report.json` under the output directory; returns the
    /// path written.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let path = out_dir.join("report.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Io(format!("serializing report: {e}")))?;
        fs::write(&path, json)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(path)
    }
}
