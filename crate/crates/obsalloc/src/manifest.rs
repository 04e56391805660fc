//! Run manifests: everything needed to replay a command and check that it
//! reproduces its outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::formats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    /// Command line without the global execution flags.
    pub argv: Vec<String>,
    /// Input path to SHA-256 hex digest.
    pub inputs: BTreeMap<String, String>,
    /// Output path to SHA-256 hex digest.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Records every file a command reads and writes.
#[derive(Debug, Default)]
pub struct Recorder {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl Recorder {
    pub fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&mut self, path: &Path) -> Result<T, CliError> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.outputs.insert(path.display().to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> Result<(), CliError> {
        let bytes = formats::to_json_bytes(value)?;
        self.write(path, &bytes)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    formats::read_json(path)
}

/// Compares current file digests against the recorded ones and returns the
/// paths that differ or are missing.
pub fn stale_files(recorded: &BTreeMap<String, String>) -> Vec<String> {
    recorded
        .iter()
        .filter(|(path, digest)| match std::fs::read(path) {
            Ok(bytes) => &sha256_hex(&bytes) != *digest,
            Err(_) => true,
        })
        .map(|(path, _)| path.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("out/g.json")), PathBuf::from("out/g.json.manifest.json"));
    }
}
