//! Append-only run manifest. Paths are relative to the run directory.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PipelineError, Stage};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Option<String> {
    std::fs::read(path).ok().map(|b| sha256_hex(&b))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
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
pub struct StageEntry {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_ms: f64,
    pub config: serde_json::Value,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub tool: String,
    pub version: String,
    pub input: FileHash,
    pub seeds: serde_json::Value,
    pub entries: Vec<StageEntry>,
}

/// State of one stage as judged against the files currently on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageState {
    Pending,
    Failed(String),
    Done,
    /// Listed files whose current hash differs from the recorded one
    /// (missing files included).
    Mismatch(Vec<String>),
}

impl PipelineManifest {
    pub fn new(input: FileHash, seeds: serde_json::Value) -> PipelineManifest {
        PipelineManifest {
            tool: "eipart".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            input,
            seeds,
            entries: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<PipelineManifest, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::CorruptManifest(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::CorruptManifest(format!("{}: {e}", path.display())))
    }

    /// Writes through a temporary file so a crash never leaves half a manifest.
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn latest(&self, stage: Stage) -> Option<&StageEntry> {
        self.entries.iter().rev().find(|e| e.stage == stage)
    }

    pub fn state(&self, stage: Stage, run_dir: &Path) -> StageState {
        let Some(entry) = self.latest(stage) else {
            return StageState::Pending;
        };
        if entry.status == StageStatus::Failed {
            return StageState::Failed(entry.error.clone().unwrap_or_default());
        }
        let bad: Vec<String> = entry
            .outputs
            .iter()
            .filter(|f| hash_file(&run_dir.join(&f.path)).as_deref() != Some(f.sha256.as_str()))
            .map(|f| f.path.clone())
            .collect();
        if bad.is_empty() {
            StageState::Done
        } else {
            StageState::Mismatch(bad)
        }
    }

    /// Stage table: name, status, wall time, key config, output hashes.
    pub fn summary(&self, run_dir: &Path) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}  input {} ({})", self.tool, self.version, self.input.path, short(&self.input.sha256));
        let _ = writeln!(out, "{:<10} {:<14} {:>10}  {}", "stage", "status", "wall_ms", "config");
        for stage in Stage::ALL {
            let state = self.state(stage, run_dir);
            let entry = self.latest(stage);
            let status = match &state {
                StageState::Pending => "pending".to_string(),
                StageState::Failed(_) => "failed".to_string(),
                StageState::Done => "done".to_string(),
                StageState::Mismatch(_) => "HASH MISMATCH".to_string(),
            };
            let wall = entry.map_or("-".to_string(), |e| format!("{:.1}", e.wall_ms));
            let cfg = entry.map_or(String::new(), |e| e.config.to_string());
            let _ = writeln!(out, "{:<10} {:<14} {:>10}  {}", stage.name(), status, wall, cfg);
            if let Some(e) = entry {
                for f in &e.outputs {
                    let flag = match &state {
                        StageState::Mismatch(bad) if bad.contains(&f.path) => "  <- mismatch",
                        _ => "",
                    };
                    let _ = writeln!(out, "    {} {}{}", short(&f.sha256), f.path, flag);
                }
                if let StageState::Failed(msg) = &state {
                    let _ = writeln!(out, "    error: {msg}");
                }
            }
        }
        out
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

/// Reads a manifest and renders its stage table against the files next to it.
pub fn inspect(manifest_path: &Path) -> Result<String, PipelineError> {
    let m = PipelineManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    Ok(m.summary(dir))
}
