use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use super::io::write_text;
use crate::error::{Error, Result};

/// Record of one command run, written next to its outputs as `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentManifest {
    pub command: String,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// SHA-256 over the names and contents of all inputs (and the config).
    pub input_hash: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Hashes each file's name, length and bytes in the given order.
pub fn content_hash(files: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for f in files {
        let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

impl ExperimentManifest {
    pub fn new(command: &str, config: Option<&Path>, seed: Option<u64>, inputs: Vec<PathBuf>) -> Result<Self> {
        let mut hashed = inputs.clone();
        hashed.extend(config.map(Path::to_path_buf));
        Ok(Self {
            command: command.to_string(),
            config: config.map(Path::to_path_buf),
            seed,
            input_hash: content_hash(&hashed)?,
            inputs,
            outputs: Vec::new(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        })
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        if let Some(c) = &self.config {
            let _ = writeln!(s, "config = {}", c.display());
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "inputs = {}", join(&self.inputs));
        let _ = writeln!(s, "outputs = {}", join(&self.outputs));
        let _ = writeln!(s, "input_sha256 = {}", self.input_hash);
        let _ = writeln!(s, "timestamp = {}", self.timestamp);
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_text())
    }
}
