use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    /// Content depends on wall-clock timings; replay does not check it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub volatile: bool,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
            volatile: false,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub argv: Vec<String>,
    pub cwd: String,
    pub params: BTreeMap<String, Value>,
    pub seeds: BTreeMap<String, u64>,
    pub results: BTreeMap<String, Value>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub version: String,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects everything a command does so it can be written as a manifest.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
    outputs: Vec<(PathBuf, bool)>,
}

impl Recorder {
    pub fn new(command: &str, argv: &[String]) -> Self {
        let cwd = std::env::current_dir()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                argv: argv.to_vec(),
                cwd,
                params: BTreeMap::new(),
                seeds: BTreeMap::new(),
                results: BTreeMap::new(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                timings: BTreeMap::new(),
            },
            started: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.manifest.params.insert(key.to_string(), value.into());
    }

    pub fn seed(&mut self, key: &str, value: u64) {
        self.manifest.seeds.insert(key.to_string(), value);
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) {
        self.manifest.results.insert(key.to_string(), value.into());
    }

    pub fn timing(&mut self, key: &str, seconds: f64) {
        self.manifest.timings.insert(key.to_string(), seconds);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.manifest.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn volatile_input(&mut self, path: &Path) -> Result<(), CliError> {
        let mut record = FileRecord::of(path)?;
        record.volatile = true;
        self.manifest.inputs.push(record);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push((path.to_path_buf(), false));
    }

    pub fn volatile_output(&mut self, path: &Path) {
        self.outputs.push((path.to_path_buf(), true));
    }

    pub fn finish(mut self, out_dir: &Path) -> Result<RunManifest, CliError> {
        for (p, volatile) in &self.outputs {
            let mut record = FileRecord::of(p)?;
            record.volatile = *volatile;
            self.manifest.outputs.push(record);
        }
        self.manifest
            .timings
            .insert("total".into(), self.started.elapsed().as_secs_f64());
        let text = serde_json::to_string_pretty(&self.manifest)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        fs::write(out_dir.join(MANIFEST_NAME), text + "\n")?;
        Ok(self.manifest)
    }
}

pub fn load_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("cannot parse manifest {}: {e}", path.display())))
}
