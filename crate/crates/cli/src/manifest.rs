//! Run manifests: configuration, input identity, grid results and timing.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha1::{Digest, Sha1};

use crate::config::RunConfig;
use crate::run::HyperRow;

/// Identity of an input file by git blob hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub bytes: usize,
    pub git_blob_sha1: String,
}

impl InputInfo {
    pub fn new(path: &Path, content: &[u8]) -> Self {
        Self {
            path: path.display().to_string(),
            bytes: content.len(),
            git_blob_sha1: git_blob_hash(content),
        }
    }
}

/// `sha1("blob <len>\0" ‖ content)`, as `git hash-object` computes it.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub status: String,
    pub config: Option<RunConfig>,
    pub seed: Option<u64>,
    pub input: Option<InputInfo>,
    pub grid: Vec<HyperRow>,
    /// Command-specific results.
    pub details: serde_json::Value,
    pub outputs: Vec<String>,
    pub error: Option<serde_json::Value>,
    /// Wall-clock time; the only field that varies between identical runs.
    pub runtime_seconds: f64,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            status: "ok".into(),
            config: None,
            seed: None,
            input: None,
            grid: Vec::new(),
            details: serde_json::Value::Null,
            outputs: Vec::new(),
            error: None,
            runtime_seconds: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_git_hash_object() {
        // `printf 'hello\n' | git hash-object --stdin`
        assert_eq!(git_blob_hash(b"hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
        assert_eq!(git_blob_hash(b""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    }
}
