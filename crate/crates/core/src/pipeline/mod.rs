//! The full chain curate → render → voxelize → explode → complete →
//! implode (with refinement) → evaluate, run inside one directory.
//!
//! Each stage reads only files written by earlier stages and writes only
//! inside its own subdirectory. The manifest records, per executed stage,
//! a config snapshot and the hashes of its inputs and outputs. A re-run
//! reuses the longest prefix of stages whose record still matches the disk
//! and the current config, then re-executes everything after it.
//!
//! Frames: the input is mapped to the unit cube (object frame) for curation
//! and rendering, then scaled by `fit` into the voxel grid (layout frame) so
//! the explosion has room. Evaluation runs in the layout frame.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod config;
mod manifest;

pub use config::{
    CompleterSpec, ExplodeSettings, ImplodeSettings, MethodName, MetricSettings, PipelineConfig, RenderSettings,
};
pub use manifest::{
    hash_file, inspect, sha256_hex, FileHash, PipelineManifest, StageEntry, StageState, StageStatus, MANIFEST_FILE,
};

use crate::completion::{Completer, CompletionError, CompletionRequest, Method};
use crate::curation::curate;
use crate::explode::{optimize_explosion, ExplosionRecord};
use crate::geom::Similarity;
use crate::implode::implode;
use crate::mesh::{load_mesh, merge_parts, normalize_to_unit_cube, parse_obj, write_obj, Part, PartSet};
use crate::metrics::{evaluate, EvalGeometry, EvalPart};
use crate::render::{render_six, write_views};
use crate::voxel::{parse_voxels, voxelize, write_voxels, PartOccupancy, SparseVoxelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Curate,
    Render,
    Voxelize,
    Explode,
    Complete,
    Implode,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Curate,
        Stage::Render,
        Stage::Voxelize,
        Stage::Explode,
        Stage::Complete,
        Stage::Implode,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Curate => "curate",
            Stage::Render => "render",
            Stage::Voxelize => "voxelize",
            Stage::Explode => "explode",
            Stage::Complete => "complete",
            Stage::Implode => "implode",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String, external: bool },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// Process exit code: 1 validation, 2 stage failure, 3 external completer.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) | PipelineError::CorruptManifest(_) => 1,
            PipelineError::Stage { external: true, .. } => 3,
            PipelineError::Stage { .. } | PipelineError::Io(_) => 2,
        }
    }
}

pub const NORMAL_FRONT: &str = "render/normal_front.png";
pub const PARTS_VOXELS: &str = "voxelize/parts.voxels";
pub const EXPLODED_VOXELS: &str = "explode/exploded.voxels";
pub const RECORD_JSON: &str = "explode/record.json";
pub const COMPLETED_VOXELS: &str = "complete/completed.voxels";
pub const IMPLODED_VOXELS: &str = "implode/imploded.voxels";
pub const FINAL_VOXELS: &str = "implode/final.voxels";
pub const REPORT_JSON: &str = "evaluate/report.json";

/// Writes `part_<id>.obj` per part.
pub fn write_part_meshes(dir: &Path, parts: &[Part]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for p in parts {
        let path = dir.join(format!("part_{}.obj", p.id));
        std::fs::write(&path, write_obj(&p.mesh))?;
        out.push(path);
    }
    Ok(out)
}

fn part_id_of(path: &Path) -> Option<u32> {
    let stem = path.file_stem()?.to_str()?;
    stem.strip_prefix("part_")?.parse().ok()
}

/// Reads every `part_<id>.obj` in `dir`, ordered by id.
pub fn read_part_meshes(dir: &Path) -> Result<PartSet, String> {
    let mut parts = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    for entry in entries {
        let path = entry.map_err(|e| e.to_string())?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("obj") {
            continue;
        }
        let Some(id) = part_id_of(&path) else { continue };
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mesh = parse_obj(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        parts.push(Part { id, mesh });
    }
    parts.sort_by_key(|p| p.id);
    Ok(parts)
}

pub fn read_voxel_parts(path: &Path) -> Result<Vec<PartOccupancy>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(parse_voxels(&text).map_err(|e| format!("{}: {e}", path.display()))?.parts())
}

pub fn write_voxel_parts(path: &Path, parts: &[PartOccupancy]) -> Result<(), String> {
    let grid = SparseVoxelGrid::from_parts(parts, true).map_err(|e| e.to_string())?;
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    }
    std::fs::write(path, write_voxels(&grid)).map_err(|e| format!("{}: {e}", path.display()))
}

fn layout_transform(cfg: &PipelineConfig) -> Similarity {
    Similarity { scale: cfg.fit, translation: [0.0; 3] }
}

/// Curated parts mapped into the voxel grid frame.
pub fn layout_parts(parts: &[Part], cfg: &PipelineConfig) -> PartSet {
    let tf = layout_transform(cfg);
    parts.iter().map(|p| Part { id: p.id, mesh: p.mesh.transformed(&tf) }).collect()
}

struct Failure {
    message: String,
    external: bool,
}

impl From<String> for Failure {
    fn from(message: String) -> Self {
        Failure { message, external: false }
    }
}

fn fail<E: std::fmt::Display>(e: E) -> Failure {
    Failure { message: e.to_string(), external: false }
}

fn completion_failure(method: &Method, e: CompletionError) -> Failure {
    let external = matches!(method, Method::External(_))
        && matches!(e, CompletionError::ExternalFailure(_) | CompletionError::ContractViolation { .. });
    Failure { message: e.to_string(), external }
}

struct Run<'a> {
    input: &'a Path,
    dir: &'a Path,
    cfg: &'a PipelineConfig,
}

impl Run<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn write(&self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<String, Failure> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(fail)?;
        }
        std::fs::write(&p, bytes).map_err(fail)?;
        Ok(rel.to_string())
    }

    fn curated_files(&self) -> Vec<String> {
        let mut files: Vec<(u32, String)> = std::fs::read_dir(self.path("curate"))
            .map(|rd| {
                rd.filter_map(|e| e.ok())
                    .filter_map(|e| {
                        let p = e.path();
                        let id = part_id_of(&p)?;
                        if p.extension()?.to_str()? != "obj" {
                            return None;
                        }
                        Some((id, format!("curate/{}", p.file_name()?.to_str()?)))
                    })
                    .collect()
            })
            .unwrap_or_default();
        files.sort();
        files.into_iter().map(|(_, f)| f).collect()
    }

    fn input_key(&self) -> String {
        std::fs::canonicalize(self.input).unwrap_or_else(|_| self.input.to_path_buf()).display().to_string()
    }

    /// Relative input paths of a stage (the curate input is absolute).
    fn inputs(&self, stage: Stage) -> Vec<String> {
        match stage {
            Stage::Curate => vec![self.input_key()],
            Stage::Render | Stage::Voxelize => self.curated_files(),
            Stage::Explode => vec![PARTS_VOXELS.into()],
            Stage::Complete => vec![EXPLODED_VOXELS.into(), RECORD_JSON.into(), NORMAL_FRONT.into()],
            Stage::Implode => vec![COMPLETED_VOXELS.into(), RECORD_JSON.into(), NORMAL_FRONT.into()],
            Stage::Evaluate => {
                let mut v = vec![FINAL_VOXELS.to_string()];
                v.extend(self.curated_files());
                v
            }
        }
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = self.cfg;
        let v = match stage {
            Stage::Curate => serde_json::to_value(c.curation),
            Stage::Render => serde_json::to_value(&c.render),
            Stage::Voxelize => Ok(serde_json::json!({ "resolution": c.resolution, "fit": c.fit })),
            Stage::Explode => serde_json::to_value(&c.explode),
            Stage::Complete => serde_json::to_value(&c.completer),
            Stage::Implode => Ok(serde_json::json!({ "implode": c.implode, "refiner": c.refiner })),
            Stage::Evaluate => Ok(serde_json::json!({ "metrics": c.metrics, "resolution": c.resolution })),
        };
        v.expect("config serializes")
    }

    fn hashes(&self, files: &[String]) -> Option<Vec<FileHash>> {
        files
            .iter()
            .map(|f| hash_file(&self.dir.join(f)).map(|sha256| FileHash { path: f.clone(), sha256 }))
            .collect()
    }

    fn still_valid(&self, manifest: &PipelineManifest, stage: Stage) -> bool {
        if manifest.state(stage, self.dir) != StageState::Done {
            return false;
        }
        let e = manifest.latest(stage).expect("done implies an entry");
        let cfg = self.stage_config(stage);
        e.config_sha256 == sha256_hex(cfg.to_string().as_bytes())
            && self.hashes(&self.inputs(stage)).is_some_and(|h| h == e.inputs)
    }

    fn clean(&self, stage: Stage) -> Result<(), Failure> {
        let d = self.path(stage.name());
        if d.exists() {
            std::fs::remove_dir_all(&d).map_err(fail)?;
        }
        std::fs::create_dir_all(&d).map_err(fail)
    }

    fn execute(&self, stage: Stage) -> Result<Vec<String>, Failure> {
        self.clean(stage)?;
        match stage {
            Stage::Curate => self.curate(),
            Stage::Render => self.render(),
            Stage::Voxelize => self.voxelize(),
            Stage::Explode => self.explode(),
            Stage::Complete => self.complete(),
            Stage::Implode => self.implode(),
            Stage::Evaluate => self.evaluate(),
        }
    }

    fn curate(&self) -> Result<Vec<String>, Failure> {
        let mesh = load_mesh(self.input).map_err(fail)?;
        let (normalized, tf) = normalize_to_unit_cube(&mesh).map_err(fail)?;
        let curated = match curate(&normalized, &self.cfg.curation).map_err(fail)? {
            Ok(c) => c,
            Err(reason) => {
                let line = serde_json::json!({ "input": self.input_key(), "rejected": reason });
                self.write("curate/rejected.jsonl", format!("{line}\n"))?;
                return Err(format!("object rejected: {}", serde_json::to_string(&reason).expect("serializes")).into());
            }
        };
        let mut outputs = Vec::new();
        for p in &curated.parts {
            outputs.push(self.write(&format!("curate/part_{}.obj", p.id), write_obj(&p.mesh))?);
        }
        let manifest = serde_json::json!({
            "source_objects": curated.source_objects,
            "normalization": tf,
            "parts": curated.parts.iter().map(|p| serde_json::json!({
                "id": p.id,
                "file": format!("part_{}.obj", p.id),
                "triangles": p.mesh.triangle_count(),
            })).collect::<Vec<_>>(),
        });
        outputs.push(self.write("curate/parts.json", pretty(&manifest))?);
        outputs.push(self.write("curate/report.json", pretty(&curated.report))?);
        Ok(outputs)
    }

    fn curated(&self) -> Result<PartSet, Failure> {
        let parts = read_part_meshes(&self.path("curate"))?;
        if parts.is_empty() {
            return Err("no curated parts".to_string().into());
        }
        Ok(parts)
    }

    fn render(&self) -> Result<Vec<String>, Failure> {
        let mesh = merge_parts(&self.curated()?);
        let s = self.cfg.render.size;
        let views = render_six(&mesh, s, s);
        write_views(&self.path("render"), &views, self.cfg.render.sixteen_bit).map_err(fail)?;
        let mut outputs = Vec::new();
        for prefix in ["normal", "ccm", "mask"] {
            for v in &views {
                outputs.push(format!("render/{prefix}_{}.png", v.spec.view.name()));
            }
        }
        Ok(outputs)
    }

    fn voxelize(&self) -> Result<Vec<String>, Failure> {
        let parts = layout_parts(&self.curated()?, self.cfg);
        let occ = parts
            .iter()
            .map(|p| voxelize(&p.mesh, p.id, self.cfg.resolution).map_err(|e| format!("part {}: {e}", p.id)))
            .collect::<Result<Vec<_>, _>>()?;
        write_voxel_parts(&self.path(PARTS_VOXELS), &occ)?;
        Ok(vec![PARTS_VOXELS.into()])
    }

    fn record(&self) -> Result<ExplosionRecord, Failure> {
        let text = std::fs::read_to_string(self.path(RECORD_JSON)).map_err(fail)?;
        ExplosionRecord::from_json(&text).map_err(fail)
    }

    fn explode(&self) -> Result<Vec<String>, Failure> {
        let parts = read_voxel_parts(&self.path(PARTS_VOXELS))?;
        let state = optimize_explosion(&parts, &self.cfg.explode_config()).map_err(fail)?;
        write_voxel_parts(&self.path(EXPLODED_VOXELS), &state.parts)?;
        self.write(RECORD_JSON, state.record.to_json())?;
        Ok(vec![EXPLODED_VOXELS.into(), RECORD_JSON.into()])
    }

    fn request(&self, parts: Vec<PartOccupancy>, imploded: Option<Vec<PartOccupancy>>) -> Result<CompletionRequest, Failure> {
        let mut req = CompletionRequest::new(parts, self.record()?).map_err(fail)?;
        req.normal_front = Some(std::fs::read(self.path(NORMAL_FRONT)).map_err(fail)?);
        req.imploded = imploded;
        req.validate().map_err(fail)?;
        Ok(req)
    }

    fn complete(&self) -> Result<Vec<String>, Failure> {
        let req = self.request(read_voxel_parts(&self.path(EXPLODED_VOXELS))?, None)?;
        let method = self.cfg.completer.method();
        let res = method.complete(&req).map_err(|e| completion_failure(&method, e))?;
        write_voxel_parts(&self.path(COMPLETED_VOXELS), res.parts())?;
        self.write("complete/provenance.json", pretty(res.provenance()))?;
        Ok(vec![COMPLETED_VOXELS.into(), "complete/provenance.json".into()])
    }

    fn implode(&self) -> Result<Vec<String>, Failure> {
        let completed = read_voxel_parts(&self.path(COMPLETED_VOXELS))?;
        let record = self.record()?;
        let icfg = self.cfg.implode_config();
        let state = implode(&record, &completed, &icfg).map_err(fail)?;
        write_voxel_parts(&self.path(IMPLODED_VOXELS), &state.parts)?;
        self.write("implode/report.json", pretty(&state.report(&record, &icfg)))?;

        let req = self.request(completed, Some(state.parts))?;
        let method = self.cfg.refiner.method();
        let res = method.complete(&req).map_err(|e| completion_failure(&method, e))?;
        write_voxel_parts(&self.path(FINAL_VOXELS), res.parts())?;
        self.write("implode/refine.json", pretty(res.provenance()))?;
        Ok(vec![
            IMPLODED_VOXELS.into(),
            "implode/report.json".into(),
            FINAL_VOXELS.into(),
            "implode/refine.json".into(),
        ])
    }

    fn evaluate(&self) -> Result<Vec<String>, Failure> {
        let pred: Vec<EvalPart> = read_voxel_parts(&self.path(FINAL_VOXELS))?
            .into_iter()
            .map(|p| EvalPart { id: p.part_id(), geometry: EvalGeometry::Voxels(p) })
            .collect();
        let gt: Vec<EvalPart> = layout_parts(&self.curated()?, self.cfg)
            .into_iter()
            .map(|p| EvalPart { id: p.id, geometry: EvalGeometry::Mesh(p.mesh) })
            .collect();
        let report = evaluate(&pred, &gt, &self.cfg.eval_config()).map_err(fail)?;
        self.write(REPORT_JSON, pretty(&report))?;
        Ok(vec![REPORT_JSON.into()])
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub manifest: PipelineManifest,
    pub executed: Vec<Stage>,
    pub reused: Vec<Stage>,
}

/// Runs (or resumes) the pipeline for `input` inside `out_dir`.
///
/// The config is validated before anything is written. On a stage failure
/// the manifest records the failed stage and the error carries its name;
/// outputs of earlier stages stay in place.
pub fn run_pipeline(input: &Path, out_dir: &Path, cfg: &PipelineConfig) -> Result<PipelineOutcome, PipelineError> {
    cfg.validate()?;
    if !input.is_file() {
        return Err(PipelineError::Validation(format!("input {} does not exist", input.display())));
    }
    std::fs::create_dir_all(out_dir)?;
    let run = Run { input, dir: out_dir, cfg };
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let input_hash = FileHash {
        path: run.input_key(),
        sha256: hash_file(input).ok_or_else(|| PipelineError::Validation("input unreadable".into()))?,
    };
    let seeds = serde_json::json!({ "metrics": cfg.metrics.seed });
    let mut manifest = if manifest_path.exists() {
        let mut m = PipelineManifest::load(&manifest_path)?;
        m.input = input_hash;
        m.seeds = seeds;
        m
    } else {
        PipelineManifest::new(input_hash, seeds)
    };
    manifest.save(&manifest_path)?;

    let mut executed = Vec::new();
    let mut reused = Vec::new();
    let mut valid_prefix = true;
    for stage in Stage::ALL {
        if valid_prefix && run.still_valid(&manifest, stage) {
            reused.push(stage);
            continue;
        }
        valid_prefix = false;

        let config = run.stage_config(stage);
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        let inputs = run.hashes(&run.inputs(stage)).unwrap_or_default();
        let start = Instant::now();
        let result = run.execute(stage);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        match result {
            Ok(outputs) => {
                let outputs = run.hashes(&outputs).ok_or_else(|| PipelineError::Stage {
                    stage,
                    message: "declared output missing".into(),
                    external: false,
                })?;
                manifest.entries.push(StageEntry {
                    stage,
                    status: StageStatus::Done,
                    wall_ms,
                    config,
                    config_sha256,
                    inputs,
                    outputs,
                    error: None,
                });
                manifest.save(&manifest_path)?;
                executed.push(stage);
            }
            Err(f) => {
                manifest.entries.push(StageEntry {
                    stage,
                    status: StageStatus::Failed,
                    wall_ms,
                    config,
                    config_sha256,
                    inputs,
                    outputs: Vec::new(),
                    error: Some(f.message.clone()),
                });
                manifest.save(&manifest_path)?;
                return Err(PipelineError::Stage { stage, message: f.message, external: f.external });
            }
        }
    }
    Ok(PipelineOutcome { manifest, executed, reused })
}
