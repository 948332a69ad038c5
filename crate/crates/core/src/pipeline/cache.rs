//! Content-addressed stage stamps.
//!
//! A stage is skipped when its key (stage name, config hash, and the digests
//! of its input files) matches the stored stamp and every output it recorded
//! is still on disk with the recorded digest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_input, sha256_hex, write_atomic};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Stamp {
    key: String,
    /// Output path relative to the output root, and its sha256.
    outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Cached,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: &'static str,
    pub status: StageStatus,
}

pub(crate) struct StageCache {
    root: PathBuf,
    config_hash: String,
}

fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_input(path)?))
}

/// Files directly inside `dir`, sorted by name. Missing directory is empty.
pub(crate) fn dir_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let hidden = entry.file_name().to_string_lossy().starts_with('.');
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

impl StageCache {
    pub fn new(root: &Path, config_hash: &str) -> Self {
        Self { root: root.to_path_buf(), config_hash: config_hash.to_string() }
    }

    fn stamp_path(&self, stage: &str) -> PathBuf {
        self.root.join(".cache").join(format!("{stage}.json"))
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(&self.root).unwrap_or(path).to_string_lossy().into_owned()
    }

    fn key(&self, stage: &str, inputs: &[PathBuf]) -> Result<String> {
        let mut text = format!("{stage}\n{}\n", self.config_hash);
        let mut sorted = inputs.to_vec();
        sorted.sort();
        for p in sorted {
            text.push_str(&format!("{} {}\n", self.relative(&p), file_digest(&p)?));
        }
        Ok(sha256_hex(text.as_bytes()))
    }

    fn is_fresh(&self, stage: &str, key: &str) -> bool {
        let Ok(bytes) = fs::read(self.stamp_path(stage)) else {
            return false;
        };
        let Ok(stamp) = serde_json::from_slice::<Stamp>(&bytes) else {
            return false;
        };
        stamp.key == key
            && stamp
                .outputs
                .iter()
                .all(|(rel, digest)| file_digest(&self.root.join(rel)).is_ok_and(|d| &d == digest))
    }

    /// Runs `body` unless the stage is fresh. `body` returns the files it wrote.
    pub fn run(
        &self,
        stage: &'static str,
        inputs: &[PathBuf],
        force: bool,
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<StageOutcome> {
        let key = self.key(stage, inputs)?;
        if !force && self.is_fresh(stage, &key) {
            log::info!("{stage}: up to date");
            return Ok(StageOutcome { stage, status: StageStatus::Cached });
        }
        let written = body()?;
        let mut outputs = BTreeMap::new();
        for p in written {
            outputs.insert(self.relative(&p), file_digest(&p)?);
        }
        let stamp = Stamp { key, outputs };
        let json = serde_json::to_string_pretty(&stamp).expect("stamp serializes");
        write_atomic(&self.stamp_path(stage), json.as_bytes())?;
        Ok(StageOutcome { stage, status: StageStatus::Ran })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_run_is_cached_until_an_input_changes() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let input = root.join("in.txt");
        let output = root.join("out.txt");
        write_atomic(&input, b"a").unwrap();
        let cache = StageCache::new(root, "h");
        let body = || {
            write_atomic(&output, b"result")?;
            Ok(vec![output.clone()])
        };
        assert_eq!(cache.run("s", &[input.clone()], false, body).unwrap().status, StageStatus::Ran);
        assert_eq!(cache.run("s", &[input.clone()], false, body).unwrap().status, StageStatus::Cached);
        write_atomic(&input, b"b").unwrap();
        assert_eq!(cache.run("s", &[input.clone()], false, body).unwrap().status, StageStatus::Ran);
        // tampered output invalidates the stamp
        write_atomic(&output, b"edited").unwrap();
        assert_eq!(cache.run("s", &[input.clone()], false, body).unwrap().status, StageStatus::Ran);
        // a different config hash is a different key
        let other = StageCache::new(root, "h2");
        assert_eq!(other.run("s", &[input], false, body).unwrap().status, StageStatus::Ran);
    }
}
