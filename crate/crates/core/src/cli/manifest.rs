use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::CliError;

/// File name of the manifest inside directory outputs.
pub const MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn file_digest(path: &Path) -> Result<FileDigest, CliError> {
    let mut f = fs::File::open(path).map_err(CliError::io(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(CliError::io(path))?;
        if n == 0 {
            break;
        }
        bytes += n as u64;
        h.update(&buf[..n]);
    }
    Ok(FileDigest { path: path.display().to_string(), sha256: hex::encode(h.finalize()), bytes })
}

/// Content digests of a file, or of every file below a directory in path
/// order. Missing paths are skipped, as are run manifests inside
/// directories since they carry a wall-clock duration.
pub fn digests(path: &Path) -> Result<Vec<FileDigest>, CliError> {
    if path.is_file() {
        return Ok(vec![file_digest(path)?]);
    }
    if !path.is_dir() {
        return Ok(Vec::new());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(CliError::io(path))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(CliError::io(path))?;
    entries.sort();
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| e.file_name().is_none_or(|n| n != MANIFEST_NAME)) {
        out.extend(digests(&e)?);
    }
    Ok(out)
}

/// Record of one invocation. Everything except `duration_secs` is a pure
/// function of the command line and input contents.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub args: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub summary: serde_json::Value,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(path, text).map_err(CliError::io(path))
    }
}

/// Output paths created by the current run, removed again if it fails.
#[derive(Debug, Default)]
pub struct Outputs {
    created: Vec<PathBuf>,
    written: Vec<PathBuf>,
}

impl Outputs {
    /// Registers `path` before it is written. Paths that already exist are
    /// overwritten but never deleted on failure.
    pub fn claim(&mut self, path: &Path) -> Result<PathBuf, CliError> {
        if !path.exists() {
            self.created.push(path.to_path_buf());
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty() && !p.exists()) {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
            self.created.push(parent.to_path_buf());
        }
        self.written.push(path.to_path_buf());
        Ok(path.to_path_buf())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn remove_created(&self) {
        for p in self.created.iter().rev() {
            let _ = if p.is_dir() { fs::remove_dir_all(p) } else { fs::remove_file(p) };
        }
    }
}
