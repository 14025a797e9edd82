//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CommandSpec;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    /// Volatile files (timings) are excluded from reproducibility checks.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub volatile: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub spec: CommandSpec,
    pub seed: Option<u64>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
    /// Wall-clock seconds per phase, summed over cells.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Non-volatile outputs in `dir` whose bytes differ from the record.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| !o.volatile)
            .filter(|o| {
                fs::read(dir.join(&o.path))
                    .map(|b| sha256_hex(&b) != o.sha256)
                    .unwrap_or(true)
            })
            .map(|o| o.path.clone())
            .collect()
    }
}

/// Collects the files a command writes under its output directory.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    records: Vec<OutputRecord>,
    inputs: Vec<InputRecord>,
    timings: BTreeMap<String, f64>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputSet {
            dir: dir.to_path_buf(),
            records: Vec::new(),
            inputs: Vec::new(),
            timings: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, rel: &str, bytes: &[u8], volatile: bool) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(rel, bytes, volatile);
        Ok(())
    }

    /// Registers a file some other writer already placed under the directory.
    pub fn register(&mut self, rel: &str) -> Result<()> {
        let path = self.dir.join(rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        self.record(rel, &bytes, false);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8], volatile: bool) {
        self.records.retain(|r| r.path != rel);
        self.records.push(OutputRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            volatile,
        });
    }

    pub fn input(&mut self, name: &str, bytes: &[u8]) {
        if !self.inputs.iter().any(|i| i.name == name) {
            self.inputs.push(InputRecord {
                name: name.to_string(),
                sha256: sha256_hex(bytes),
            });
        }
    }

    pub fn time(&mut self, phase: &str, seconds: f64) {
        *self.timings.entry(phase.to_string()).or_default() += seconds;
    }

    /// Writes the manifest and returns it.
    pub fn finish(self, spec: &CommandSpec) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec: spec.clone(),
            seed: spec.seed(),
            inputs: self.inputs,
            outputs: self.records,
            timings: self.timings,
        };
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}
