//! Run manifest written next to every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, bytes: &[u8]) -> Self {
        FileDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
        }
    }
}

/// Enough to re-run the command: the arguments it was given, digests of what
/// it read and wrote, and the tool version. The thread count is deliberately
/// absent since outputs do not depend on it.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub seed: Option<u64>,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub version: String,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            argv,
            inputs: Vec::new(),
            seed: None,
            parameters: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("parameter serialises");
        self.parameters.insert(key.to_string(), v);
    }
}

pub fn manifest_path(primary_out: &Path) -> PathBuf {
    let mut s = primary_out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn write(manifest: &RunManifest, primary_out: &Path) -> Result<(), CliError> {
    let text = lemps_core::json::to_stable_json(manifest)?;
    let path = manifest_path(primary_out);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Internal(format!("writing {}: {e}", path.display())))
}
