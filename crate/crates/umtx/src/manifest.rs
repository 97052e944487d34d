//! Persisted record of pipeline stages with content digests.
//!
//! Paths are stored relative to the workspace root and the file holds no
//! timestamps, so seeded runs produce identical manifests. Wall-clock
//! timings go to a separate `timings.tsv`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const TIMINGS_FILE: &str = "timings.tsv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Resolved configuration of the latest run.
    pub config: String,
    #[serde(default, rename = "stage")]
    pub stages: Vec<StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Relative path with forward slashes.
fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

pub fn artifact(root: &Path, path: &Path) -> Result<Artifact> {
    Ok(Artifact {
        path: relative(root, path),
        sha256: digest_file(path)?,
    })
}

impl Manifest {
    pub fn new(config: String) -> Self {
        Manifest {
            version: MANIFEST_VERSION,
            config,
            stages: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: Manifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!("unsupported version {}", m.version)));
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Writes via a temporary file and rename, so a crash never leaves a
    /// truncated manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("toml.tmp");
        std::fs::write(&tmp, self.to_toml()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    /// Latest record for a stage.
    pub fn latest(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().rev().find(|r| r.name == name)
    }

    /// The latest record for `name` if it succeeded with the same config
    /// hash and the same input digests, and its outputs are intact on disk.
    pub fn reusable(&self, root: &Path, name: &str, config_hash: &str, inputs: &[Artifact]) -> Option<&StageRecord> {
        let r = self.latest(name)?;
        if r.status != StageStatus::Done || r.config_hash != config_hash || r.inputs != inputs {
            return None;
        }
        let intact = r.outputs.iter().all(|a| {
            let p = root.join(&a.path);
            digest_file(&p).map(|d| d == a.sha256).unwrap_or(false)
        });
        intact.then_some(r)
    }

    pub fn push(&mut self, record: StageRecord) {
        self.stages.push(record);
    }

    /// Every artifact path mentioned by the latest record of each stage.
    pub fn artifact_paths(&self) -> Vec<PathBuf> {
        let mut seen = BTreeMap::new();
        for r in &self.stages {
            seen.insert(r.name.clone(), r);
        }
        let mut out: Vec<PathBuf> = seen
            .values()
            .flat_map(|r| r.inputs.iter().chain(&r.outputs))
            .map(|a| PathBuf::from(&a.path))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Appends `stage\tseconds\tskipped` to the timings file.
pub fn log_timing(root: &Path, stage: &str, seconds: f64, skipped: bool) -> Result<()> {
    let path = root.join(TIMINGS_FILE);
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{stage}\t{seconds:.3}\t{skipped}").map_err(|e| Error::io(&path, e))
}
