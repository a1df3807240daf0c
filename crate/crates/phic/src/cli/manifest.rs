//! Per-stage manifests.
//!
//! Every stage writes `manifest_<stage>.json` next to its artifacts: the
//! effective configuration, the seed list in play, a content digest of each
//! input file, and the list of outputs. No timestamps, hostnames, or other
//! run-varying fields, so a repeated run produces identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    /// Cross-validation pass seeds the stage used; empty when inapplicable.
    pub seeds: Vec<u64>,
    /// Effective configuration, every key.
    pub config: BTreeMap<String, String>,
    /// Input file path (relative to the output directory where possible)
    /// to `sha256:<hex>` of its bytes.
    pub inputs: BTreeMap<String, String>,
    /// Artifacts the stage wrote, relative to the output directory.
    pub outputs: Vec<String>,
}

/// SHA-256 of a file's bytes, as `sha256:<hex>`.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("sha256:{:x}", hasher.finalize()))
}

fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .display()
        .to_string()
}

/// Digests `inputs`, relativizes all paths against `out`, and writes
/// `manifest_<stage>.json` into `out`. Returns the manifest path.
pub fn write_manifest(
    out: &Path,
    stage: &str,
    seed: u64,
    seeds: Vec<u64>,
    config: BTreeMap<String, String>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf> {
    let mut digests = BTreeMap::new();
    for input in inputs {
        digests.insert(relative_to(input, out), file_digest(input)?);
    }
    let manifest = Manifest {
        stage: stage.to_string(),
        seed,
        seeds,
        config,
        inputs: digests,
        outputs: outputs.iter().map(|p| relative_to(p, out)).collect(),
    };
    let path = out.join(format!("manifest_{stage}.json"));
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
