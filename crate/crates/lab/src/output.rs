//! Run directories: tables, event streams and the checksummed manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{LabError, ScenarioConfig};

pub const MANIFEST: &str = "manifest.json";

/// Text form of every number written to a table: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Pass => 0,
            Self::Fail => 1,
            Self::Error => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Non-finite values are written as `null`.
    pub value: Option<f64>,
    pub bound: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub op: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub version: String,
    pub config: serde_json::Value,
    pub timings: Vec<Timing>,
    pub files: Vec<FileEntry>,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub status: Status,
    pub error: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the products of one run.
#[derive(Debug)]
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<FileEntry>,
    metrics: BTreeMap<String, f64>,
    checks: Vec<Check>,
    timings: Vec<Timing>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self, LabError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: vec![], metrics: BTreeMap::new(), checks: vec![], timings: vec![] })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes `bytes` to `name` (relative to the run directory) and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), LabError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha_hex(bytes) });
        Ok(())
    }

    /// Records a file written by someone else (a nested run).
    pub fn adopt(&mut self, name: &str) -> Result<(), LabError> {
        let bytes = fs::read(self.dir.join(name))?;
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha_hex(&bytes) });
        Ok(())
    }

    /// Numeric table.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), LabError>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        self.csv_text(name, header, rows.into_iter().map(|r| r.into_iter().map(num).collect()))
    }

    pub fn csv_text<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), LabError>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Output(e.to_string()))?;
        self.write(name, &bytes)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), LabError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// One JSON object per line.
    pub fn jsonl<T: Serialize, I: IntoIterator<Item = T>>(&mut self, name: &str, items: I) -> Result<(), LabError> {
        let mut bytes = Vec::new();
        for it in items {
            serde_json::to_writer(&mut bytes, &it)?;
            bytes.push(b'\n');
        }
        self.write(name, &bytes)
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.metrics.insert(name.to_string(), value);
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, value: f64, bound: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            value: value.is_finite().then_some(value),
            bound: bound.into(),
        });
    }

    /// Runs `f` and records its wall time under `op`.
    pub fn time<T>(&mut self, op: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let t0 = Instant::now();
        let r = f(self);
        self.timings.push(Timing { op: op.to_string(), seconds: t0.elapsed().as_secs_f64() });
        r
    }

    /// Writes the manifest; `error` turns the status into [`Status::Error`].
    pub fn finish(mut self, cfg: &ScenarioConfig, error: Option<&LabError>) -> Result<RunManifest, LabError> {
        let status = match error {
            Some(_) => Status::Error,
            None if self.checks.iter().all(|c| c.passed) => Status::Pass,
            None => Status::Fail,
        };
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            scenario: cfg.scenario.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(cfg)?,
            timings: self.timings,
            files: self.files,
            metrics: self.metrics,
            checks: self.checks,
            status,
            error: error.map(LabError::to_json),
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join(MANIFEST), bytes)?;
        Ok(manifest)
    }
}

/// Reads `dir/manifest.json` and checks every listed file against its size
/// and checksum. Listed manifests of nested runs are verified recursively.
pub fn verify_manifest(dir: &Path) -> Result<RunManifest, LabError> {
    let text = fs::read(dir.join(MANIFEST))?;
    let manifest: RunManifest = serde_json::from_slice(&text)?;
    for f in &manifest.files {
        let path = dir.join(&f.path);
        let bytes = fs::read(&path).map_err(|e| LabError::Output(format!("{}: {e}", f.path)))?;
        if bytes.len() as u64 != f.bytes || sha_hex(&bytes) != f.sha256 {
            return Err(LabError::Output(format!("{}: checksum mismatch", f.path)));
        }
        if path.file_name().is_some_and(|n| n == MANIFEST) {
            verify_manifest(path.parent().expect("file has a parent"))?;
        }
    }
    Ok(manifest)
}
