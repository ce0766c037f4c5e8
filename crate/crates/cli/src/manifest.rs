//! Run manifests: the command, its fully resolved configuration, input
//! hashes, artifact paths and timings, written next to the primary output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// `<out>.manifest.json` beside the primary artifact.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub struct Recorder {
    command: String,
    start: Instant,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<String>,
}

impl Recorder {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), start: Instant::now(), inputs: BTreeMap::new(), artifacts: Vec::new() }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Failure> {
        let h = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), h);
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn finish(self, primary: &Path, config: Value, seed: Option<u64>) -> Result<(), Failure> {
        let path = manifest_path(primary);
        let mut timings = BTreeMap::new();
        timings.insert("wall_s".to_string(), self.start.elapsed().as_secs_f64());
        let m = RunManifest { command: self.command, config, seed, inputs: self.inputs, artifacts: self.artifacts, timings };
        let text = serde_json::to_string_pretty(&m).map_err(|e| Failure::runtime(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }
}
