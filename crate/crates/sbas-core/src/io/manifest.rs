//! Run manifest: SHA-256 of every artifact a pipeline run produced.
//!
//! The manifest is the determinism contract — two runs of the same config
//! must produce byte-identical manifests regardless of thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Sorted map from artifact path (relative to the output directory, `/`
/// separators) to the lowercase hex SHA-256 of its bytes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, relpath: &str, sha256: String) {
        self.entries.insert(relpath.to_string(), sha256);
    }

    pub fn record(&mut self, relpath: &str, bytes: &[u8]) {
        self.insert(relpath, sha256_hex(bytes));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hash_of(&self, relpath: &str) -> Option<&str> {
        self.entries.get(relpath).map(String::as_str)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(p, h)| (p.as_str(), h.as_str()))
    }

    /// One `<hash>  <path>` line per artifact, sorted by path.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (path, hash) in &self.entries {
            let _ = writeln!(out, "{hash}  {path}");
        }
        out
    }

    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (hash, path) = line.split_once("  ").ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                msg: "expected `<sha256>  <path>`".into(),
            })?;
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: i + 1,
                    msg: format!("`{hash}` is not a sha256 hex digest"),
                });
            }
            entries.insert(path.to_string(), hash.to_ascii_lowercase());
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
