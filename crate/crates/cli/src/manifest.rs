//! On-disk run store. Each run lives in `<root>/<run id>/` next to its
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use geossl::training::ExperimentConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Content hash of the sources this binary was built from.
pub const CODE_HASH: &str = env!("GEOSSL_CODE_HASH");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Paths are relative to the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub config: String,
    pub checkpoints: String,
    pub metrics: String,
    #[serde(default)]
    pub reports: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub status: RunStatus,
    pub code_hash: String,
    pub started_unix: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_unix: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Artifacts,
    pub config: ExperimentConfig,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(run_id: &str, config: ExperimentConfig) -> Self {
        Self {
            run_id: run_id.to_string(),
            status: RunStatus::Running,
            code_hash: CODE_HASH.to_string(),
            started_unix: unix_now(),
            finished_unix: None,
            final_epoch: None,
            param_hash: None,
            error: None,
            artifacts: Artifacts {
                config: CONFIG_FILE.into(),
                checkpoints: geossl::training::SERIES_FILE.into(),
                metrics: geossl::training::METRICS_FILE.into(),
                reports: Vec::new(),
            },
            config,
        }
    }

    pub fn add_report(&mut self, rel: String) {
        if !self.artifacts.reports.contains(&rel) {
            self.artifacts.reports.push(rel);
            self.artifacts.reports.sort();
        }
    }
}

/// Directory holding every run.
#[derive(Debug, Clone)]
pub struct RunStore {
    pub root: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.split('/').all(|part| {
            !part.is_empty() && part != "." && part != ".." && part.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        })
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn run_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn exists(&self, id: &str) -> bool {
        self.run_dir(id).join(MANIFEST_FILE).exists()
    }

    pub fn load(&self, id: &str) -> Result<RunManifest> {
        let path = self.run_dir(id).join(MANIFEST_FILE);
        let raw = fs::read(&path).with_context(|| format!("no run `{id}` in {}", self.root.display()))?;
        serde_json::from_slice(&raw).with_context(|| format!("unreadable manifest {}", path.display()))
    }

    pub fn save(&self, m: &RunManifest) -> Result<()> {
        if !valid_id(&m.run_id) {
            bail!("invalid run id `{}`", m.run_id);
        }
        let dir = self.run_dir(&m.run_id);
        fs::create_dir_all(&dir)?;
        let path = dir.join(MANIFEST_FILE);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(m)?)?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Run ids below the store root, sorted.
    pub fn list(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        walk(&self.root, &self.root, &mut out)?;
        out.sort();
        Ok(out)
    }
}

fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    let Ok(entries) = fs::read_dir(dir) else { return Ok(()) };
    for e in entries.flatten() {
        let p = e.path();
        if !p.is_dir() {
            continue;
        }
        if p.join(MANIFEST_FILE).exists() {
            let rel = p.strip_prefix(root).unwrap_or(&p);
            out.push(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        } else {
            walk(root, &p, out)?;
        }
    }
    Ok(())
}
