//! Run manifests: one JSON document written next to each artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use phd_core::pretrain::write_atomic;
use phd_core::seed::sha256_hex;
use serde::Serialize;
use serde_json::{json, Value};

/// Reference-scale pre-training settings, recorded beside the chosen ones.
pub fn reference_scale() -> Value {
    json!({ "dim": 300, "layers": 5, "epochs": 100, "lr": 0.001, "batch_size": 256 })
}

/// Digest of a file, or of every regular file in a directory (sorted by
/// name, each entry contributing its name and its own digest).
pub fn digest_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("reading {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()
            .with_context(|| format!("reading {}", path.display()))?;
        entries.retain(|p| p.is_file());
        entries.sort();
        let mut listing = String::new();
        for p in entries {
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            listing.push_str(&format!("{name}\0{}\n", digest_path(&p)?));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}

#[derive(Debug, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
}

pub struct Manifest {
    subcommand: &'static str,
    config: Value,
    seed: u64,
    inputs: Vec<FileRecord>,
    started: Instant,
}

impl Manifest {
    pub fn start(subcommand: &'static str, seed: u64, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            subcommand,
            config: serde_json::to_value(config)?,
            seed,
            inputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let sha256 = digest_path(path)?;
        self.inputs.push(FileRecord { path: path.display().to_string(), sha256 });
        Ok(())
    }

    /// Writes `<primary>.manifest.json` atomically and returns its path.
    pub fn finish(self, outputs: &[&Path]) -> Result<PathBuf> {
        let primary = outputs.first().context("manifest needs at least one output")?;
        let outputs = outputs
            .iter()
            .map(|p| Ok(FileRecord { path: p.display().to_string(), sha256: digest_path(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let doc = json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "reference_scale": reference_scale(),
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": outputs,
            "wall_clock_secs": self.started.elapsed().as_secs_f64(),
        });
        let path = sibling(primary, "manifest.json");
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// `dir/name.ext` -> `dir/name.ext.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}
