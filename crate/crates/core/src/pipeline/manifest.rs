//! Run manifest and output-directory lock.
//!
//! `run.json` in the output directory records, per completed stage, the
//! wall-clock time, the config it ran with and every artifact it wrote as a
//! path relative to the output directory plus the lowercase hex SHA-256 of
//! the file bytes.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::{read_file, write_atomic};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "run.json";
pub const LOCK_FILE: &str = ".lock";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn digest_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_file(path)?))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seconds: f64,
    pub config: serde_json::Value,
    pub outputs: Vec<ArtifactRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        RunManifest { tool_version: env!("CARGO_PKG_VERSION").to_string(), config, stages: BTreeMap::new() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&read_file(path)?).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    /// Every artifact digest keyed by relative path, across all stages.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.stages.values().flat_map(|s| s.outputs.iter().map(|a| (a.path.clone(), a.sha256.clone()))).collect()
    }

    /// Checks that `stage` completed and its artifacts are unchanged on disk.
    pub fn verify_stage(&self, out_dir: &Path, stage: &str, marker: &Path) -> Result<()> {
        let record = self
            .stages
            .get(stage)
            .ok_or_else(|| Error::MissingArtifact { stage: stage.to_string(), path: out_dir.join(marker) })?;
        for a in &record.outputs {
            let path = out_dir.join(&a.path);
            if !path.is_file() {
                return Err(Error::MissingArtifact { stage: stage.to_string(), path });
            }
            let actual = digest_file(&path)?;
            if actual != a.sha256 {
                return Err(Error::DigestMismatch { stage: stage.to_string(), path, expected: a.sha256.clone(), actual });
            }
        }
        Ok(())
    }
}

/// Relative path with `/` separators, as stored in the manifest.
pub fn relative_name(out_dir: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(out_dir).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Exclusive ownership of an output directory, released on drop. A lock
/// left behind by a crashed run must be removed by hand.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(dir.to_path_buf())),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = DirLock::acquire(dir.path()).unwrap();
        assert!(matches!(DirLock::acquire(dir.path()), Err(Error::Locked(_))));
        drop(a);
        DirLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn verification_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("x.bin");
        std::fs::write(&f, b"hello").unwrap();
        let mut m = RunManifest::new(serde_json::Value::Null);
        m.stages.insert(
            "extract".into(),
            StageRecord {
                seconds: 0.0,
                config: serde_json::Value::Null,
                outputs: vec![ArtifactRecord { path: "x.bin".into(), sha256: sha256_hex(b"hello") }],
            },
        );
        m.verify_stage(dir.path(), "extract", Path::new("features")).unwrap();
        std::fs::write(&f, b"hellO").unwrap();
        assert!(matches!(m.verify_stage(dir.path(), "extract", Path::new("features")), Err(Error::DigestMismatch { .. })));
        std::fs::remove_file(&f).unwrap();
        let err = m.verify_stage(dir.path(), "extract", Path::new("features")).unwrap_err();
        assert!(matches!(&err, Error::MissingArtifact { stage, .. } if stage == "extract"));
        let err = m.verify_stage(dir.path(), "generate", Path::new("data")).unwrap_err();
        assert!(err.to_string().contains("generate"));
    }
}
