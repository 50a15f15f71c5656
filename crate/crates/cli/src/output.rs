//! Writes artifacts and `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::experiment::RunOutput;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Manifest contents: the effective config, one hash per emitted file and
/// the experiment summary. No timestamps, so reruns are byte-identical.
pub fn manifest(cfg: &ExperimentConfig, run: &RunOutput) -> Value {
    let mut files: Vec<Value> = run
        .artifacts
        .iter()
        .map(|a| json!({ "name": a.name, "bytes": a.bytes.len(), "sha256": sha256_hex(&a.bytes) }))
        .collect();
    files.sort_by(|a, b| a["name"].as_str().cmp(&b["name"].as_str()));
    json!({
        "experiment": cfg.experiment.name(),
        "config": cfg.raw,
        "master_seed": cfg.master_seed,
        "files": files,
        "summary": run.summary,
    })
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), RunError> {
    fs::write(&path, bytes).map_err(|source| RunError::Io { path, source })
}

/// Writes every artifact and then the manifest into `dir`, returning the
/// manifest path.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, run: &RunOutput) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for artifact in &run.artifacts {
        write(dir.join(artifact.name), &artifact.bytes)?;
    }
    let mut text = serde_json::to_string_pretty(&manifest(cfg, run)).expect("manifest serializes");
    text.push('\n');
    let path = dir.join(MANIFEST);
    write(path.clone(), text.as_bytes())?;
    Ok(path)
}
