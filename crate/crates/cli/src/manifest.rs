use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run, written next to its outputs. Keys starting
/// with `wall_time` are the only ones that vary between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Resolved configuration after defaults, file and flags.
    pub config: Value,
    /// Input path to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// Output file names, relative to the manifest's directory.
    pub outputs: Vec<String>,
    /// Deterministic command-specific results.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub summary: BTreeMap<String, Value>,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub wall_time_detail: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut r = BufReader::new(File::open(path).map_err(|e| CliError::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Collects a run's inputs and outputs while it executes.
pub struct Run {
    command: &'static str,
    dir: PathBuf,
    start: Instant,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    summary: BTreeMap<String, Value>,
    timing: BTreeMap<String, Value>,
}

impl Run {
    pub fn start(command: &'static str, dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            command,
            dir: dir.to_path_buf(),
            start: Instant::now(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            summary: BTreeMap::new(),
            timing: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    /// Registers an output file and returns its full path.
    pub fn output(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.output(name);
        std::fs::write(&p, bytes).map_err(|e| CliError::io(&p, e))
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn summary(&mut self, key: &str, value: impl Serialize) -> CliResult<()> {
        self.summary
            .insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn timing(&mut self, key: &str, value: impl Serialize) -> CliResult<()> {
        self.timing.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn finish(self, config: &impl Serialize) -> CliResult<RunManifest> {
        let manifest = RunManifest {
            command: self.command.into(),
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            outputs: self.outputs,
            summary: self.summary,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            wall_time_detail: self.timing,
        };
        let p = self.dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        Ok(manifest)
    }
}
