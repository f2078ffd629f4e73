//! Part completion behind an observation-preserving contract: a completer
//! may add cells to a part but never remove observed ones, and never adds,
//! drops or renames parts.
//!
//! A request carries the exploded parts and, for refinement, the imploded
//! layout. Completers act on [`CompletionRequest::target`]: the imploded
//! parts when present, the exploded parts otherwise.

use std::collections::BTreeSet;
use std::io::Read as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explode::ExplosionRecord;
use crate::voxel::{morphological_close, parse_voxels, write_voxels, PartOccupancy, SparseVoxelGrid, VoxelError};

#[derive(Debug, Error)]
pub enum CompletionError {
    #[error("completion request has no parts")]
    NoParts,
    #[error("part {part} uses resolution {got}, request uses {expected}")]
    ResolutionMismatch { part: u32, expected: u32, got: u32 },
    #[error("closing radius must be at least 1")]
    BadRadius,
    #[error("completer broke the contract at part {part}: {detail}")]
    ContractViolation { part: u32, detail: String },
    #[error("external completer failed: {0}")]
    ExternalFailure(String),
    #[error("voxel data: {0}")]
    Voxel(#[from] VoxelError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub parts: Vec<PartOccupancy>,
    pub record: ExplosionRecord,
    /// Encoded PNG of the frontal normal map.
    pub normal_front: Option<Vec<u8>>,
    /// Imploded layout, present when the request refines a compact state.
    pub imploded: Option<Vec<PartOccupancy>>,
}

impl CompletionRequest {
    pub fn new(parts: Vec<PartOccupancy>, record: ExplosionRecord) -> Result<CompletionRequest, CompletionError> {
        let req = CompletionRequest { parts, record, normal_front: None, imploded: None };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<(), CompletionError> {
        let first = self.parts.first().ok_or(CompletionError::NoParts)?;
        let r = first.resolution();
        for p in self.parts.iter().chain(self.imploded.iter().flatten()) {
            if p.resolution() != r {
                return Err(CompletionError::ResolutionMismatch { part: p.part_id(), expected: r, got: p.resolution() });
            }
        }
        if let Some(imp) = &self.imploded {
            let ids = |v: &[PartOccupancy]| v.iter().map(|p| p.part_id()).collect::<Vec<_>>();
            if ids(imp) != ids(&self.parts) {
                return Err(CompletionError::ContractViolation {
                    part: imp.first().map_or(0, |p| p.part_id()),
                    detail: "imploded parts do not match exploded parts".into(),
                });
            }
        }
        Ok(())
    }

    pub fn target(&self) -> &[PartOccupancy] {
        self.imploded.as_deref().unwrap_or(&self.parts)
    }

    pub fn resolution(&self) -> u32 {
        self.parts[0].resolution()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub completer: String,
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    parts: Vec<PartOccupancy>,
    provenance: Provenance,
}

impl CompletionResult {
    /// Accepts `completed` only if it keeps the ids of the request target
    /// and each part contains its observed cells. Output follows target order.
    pub fn new(
        request: &CompletionRequest,
        completed: Vec<PartOccupancy>,
        provenance: Provenance,
    ) -> Result<CompletionResult, CompletionError> {
        let have: BTreeSet<u32> = completed.iter().map(|p| p.part_id()).collect();
        for input in request.target() {
            if !have.contains(&input.part_id()) {
                return Err(CompletionError::ContractViolation {
                    part: input.part_id(),
                    detail: "part missing from output".into(),
                });
            }
        }
        let want: BTreeSet<u32> = request.target().iter().map(|p| p.part_id()).collect();
        if let Some(extra) = completed.iter().find(|p| !want.contains(&p.part_id())) {
            return Err(CompletionError::ContractViolation {
                part: extra.part_id(),
                detail: "part not in request".into(),
            });
        }
        let mut ordered = Vec::with_capacity(request.target().len());
        for input in request.target() {
            let out = completed
                .iter()
                .find(|p| p.part_id() == input.part_id())
                .expect("presence checked above");
            if out.resolution() != input.resolution() {
                return Err(CompletionError::ContractViolation {
                    part: input.part_id(),
                    detail: format!("resolution changed to {}", out.resolution()),
                });
            }
            let dropped = input.cells().difference(out.cells()).count();
            if dropped > 0 {
                return Err(CompletionError::ContractViolation {
                    part: input.part_id(),
                    detail: format!("{dropped} observed cells removed"),
                });
            }
            ordered.push(out.clone());
        }
        Ok(CompletionResult { parts: ordered, provenance })
    }

    pub fn parts(&self) -> &[PartOccupancy] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<PartOccupancy> {
        self.parts
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

pub trait Completer {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

pub fn complete_identity(req: &CompletionRequest) -> Result<CompletionResult, CompletionError> {
    req.validate()?;
    CompletionResult::new(
        req,
        req.target().to_vec(),
        Provenance { completer: "identity".into(), params: serde_json::json!({}) },
    )
}

pub fn complete_closing(req: &CompletionRequest, k: u32) -> Result<CompletionResult, CompletionError> {
    req.validate()?;
    if k == 0 {
        return Err(CompletionError::BadRadius);
    }
    let parts = req
        .target()
        .iter()
        .map(|p| {
            let mut cells = morphological_close(p, k).cells().clone();
            cells.extend(p.cells().iter().copied());
            PartOccupancy::new(p.part_id(), p.resolution(), cells)
        })
        .collect::<Result<Vec<_>, _>>()?;
    CompletionResult::new(
        req,
        parts,
        Provenance { completer: "closing".into(), params: serde_json::json!({ "k": k }) },
    )
}

/// Pivot of the mirror plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MirrorPivot {
    /// Centre of the part's own voxel box: `i' = min + max - i`.
    #[default]
    Part,
    /// Grid centre, the world plane through the origin: `i' = R - 1 - i`.
    Grid,
}

pub fn mirror_cells(p: &PartOccupancy, axis: Axis, pivot: MirrorPivot) -> PartOccupancy {
    let a = axis.index();
    let b = p.voxel_aabb();
    let sum = match pivot {
        MirrorPivot::Part => b.min[a] + b.max[a],
        MirrorPivot::Grid => p.resolution() as i32 - 1,
    };
    let mut cells = p.cells().clone();
    for c in p.cells() {
        let mut m = *c;
        m[a] = sum - c[a];
        cells.insert(m);
    }
    PartOccupancy::new(p.part_id(), p.resolution(), cells).expect("reflection stays inside the grid")
}

pub fn complete_mirror(
    req: &CompletionRequest,
    axis: Axis,
    pivot: MirrorPivot,
) -> Result<CompletionResult, CompletionError> {
    req.validate()?;
    let parts = req.target().iter().map(|p| mirror_cells(p, axis, pivot)).collect();
    CompletionResult::new(
        req,
        parts,
        Provenance { completer: "mirror".into(), params: serde_json::json!({ "axis": axis, "pivot": pivot }) },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

pub const REQUEST_DIR: &str = "request";
pub const COMPLETED_FILE: &str = "completed.voxels";

/// Writes the exchange directory: `request/exploded.voxels`,
/// `request/record.json`, `request/normal_front.png` (when present) and
/// `request/imploded.voxels` (refinement only).
pub fn write_exchange(dir: &std::path::Path, req: &CompletionRequest) -> Result<(), CompletionError> {
    let rq = dir.join(REQUEST_DIR);
    std::fs::create_dir_all(&rq)?;
    let exploded = SparseVoxelGrid::from_parts(&req.parts, true)?;
    std::fs::write(rq.join("exploded.voxels"), write_voxels(&exploded))?;
    std::fs::write(rq.join("record.json"), req.record.to_json())?;
    if let Some(png) = &req.normal_front {
        std::fs::write(rq.join("normal_front.png"), png)?;
    }
    if let Some(imp) = &req.imploded {
        let grid = SparseVoxelGrid::from_parts(imp, true)?;
        std::fs::write(rq.join("imploded.voxels"), write_voxels(&grid))?;
    }
    Ok(())
}

pub fn complete_external(req: &CompletionRequest, cmd: &ExternalCommand) -> Result<CompletionResult, CompletionError> {
    req.validate()?;
    let dir = tempfile::tempdir()?;
    write_exchange(dir.path(), req)?;

    let mut child = Command::new(&cmd.program)
        .args(&cmd.args)
        .arg(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| CompletionError::ExternalFailure(format!("cannot start {}: {e}", cmd.program.display())))?;
    let mut stderr = child.stderr.take().expect("piped");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });

    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if start.elapsed() >= cmd.timeout {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CompletionError::ExternalFailure(format!(
                "timed out after {:.1}s",
                cmd.timeout.as_secs_f64()
            )));
        }
        std::thread::sleep(Duration::from_millis(10));
    };
    let err_text = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(CompletionError::ExternalFailure(format!("{status}: {}", err_text.trim())));
    }

    let text = std::fs::read_to_string(dir.path().join(COMPLETED_FILE))
        .map_err(|e| CompletionError::ExternalFailure(format!("no {COMPLETED_FILE}: {e}")))?;
    let grid = parse_voxels(&text)?;
    if grid.resolution() != req.resolution() {
        return Err(CompletionError::ContractViolation {
            part: req.target()[0].part_id(),
            detail: format!("output resolution {} != {}", grid.resolution(), req.resolution()),
        });
    }
    CompletionResult::new(
        req,
        grid.parts(),
        Provenance {
            completer: "external".into(),
            params: serde_json::json!({
                "program": cmd.program.display().to_string(),
                "args": cmd.args,
                "timeout_s": cmd.timeout.as_secs_f64(),
            }),
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Identity,
    Closing(u32),
    Mirror(Axis, MirrorPivot),
    External(ExternalCommand),
}

impl Completer for Method {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, CompletionError> {
        match self {
            Method::Identity => complete_identity(request),
            Method::Closing(k) => complete_closing(request, *k),
            Method::Mirror(a, p) => complete_mirror(request, *a, *p),
            Method::External(c) => complete_external(request, c),
        }
    }
}
