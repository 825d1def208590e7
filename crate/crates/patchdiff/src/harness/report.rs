//! Run manifests and artifact files. Every artifact name embeds the
//! experiment and the master seed; numeric content is written with the
//! shortest round-trip float format, so identical runs produce identical
//! bytes (wall time lives only in the manifest).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CheckRecord;

use super::config::{ExperimentConfig, ExperimentKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: ExperimentKind,
    pub master_seed: u64,
    pub tool_version: String,
    pub wall_time_secs: f64,
    pub config: ExperimentConfig,
    pub checks: Vec<CheckRecord>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn manifest_file_name(kind: ExperimentKind, seed: u64) -> String {
    format!("manifest_{kind}_{seed}.json")
}

pub fn artifact_file_name(prefix: &str, kind: ExperimentKind, seed: u64, ext: &str) -> String {
    format!("{prefix}_{kind}_{seed}.{ext}")
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(manifest_file_name(manifest.experiment, manifest.master_seed));
    let body = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::Invariant(format!("manifest serialization failed: {e}")))?;
    fs::write(&path, body)?;
    Ok(path)
}

/// Best-effort manifest for a run that died before producing results.
pub fn write_failure_manifest(
    dir: &Path,
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    error: &Error,
) {
    let manifest = RunManifest {
        experiment: kind,
        master_seed: cfg.master_seed.unwrap_or(0),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_secs: 0.0,
        config: cfg.clone(),
        checks: vec![CheckRecord {
            name: "run-error".into(),
            passed: false,
            detail: error.to_string(),
        }],
        artifacts: Vec::new(),
    };
    let _ = write_manifest(dir, &manifest);
}

/// Writes a JSON artifact and returns its file name.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<String> {
    fs::create_dir_all(dir)?;
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Invariant(format!("artifact serialization failed: {e}")))?;
    fs::write(dir.join(name), body)?;
    Ok(name.to_string())
}

/// Writes a text artifact (delimited tables, trajectories).
pub fn write_text(dir: &Path, name: &str, contents: &str) -> Result<String> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(name.to_string())
}

/// Renders an `N,sup_error` style two-column table.
pub fn error_table(header: (&str, &str), rows: &[(u64, f64)]) -> String {
    let mut out = format!("{},{}\n", header.0, header.1);
    for (n, err) in rows {
        out.push_str(&format!("{n},{err}\n"));
    }
    out
}
