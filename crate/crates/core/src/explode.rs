//! Radial explosion of part occupancies.
//!
//! Each part gets an outward direction `u_k` (its box centre minus the
//! centre of the union box) and is stepped along it in whole `step`
//! increments until every pair of parts is separated: no shared cells and a
//! box gap of at least `margin` empty cell layers on some axis. The per-part
//! distances `d_k` are recorded so the layout can be undone exactly.
//!
//! Rounds visit parts in increasing distance from the centre and test each
//! against the current layout. A part only advances for conflicts with parts
//! that are not farther out than itself; the farther part of a conflicting
//! pair is always the one that moves, so co-radial parts do not chase each
//! other outward forever.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{from_array, to_array, Vec3};
use crate::voxel::{cell_size, quantize_offset, PartOccupancy, VoxelBox};

pub const DEFAULT_MARGIN: u32 = 2;

/// Centres closer than this to the global centre fall back to a fixed
/// direction.
const CENTER_EPS: f64 = 1e-6;
const FALLBACK_COUNT: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum ExplodeError {
    #[error("no parts given")]
    NoParts,
    #[error("step must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("separation not reached after {0} rounds")]
    NoConvergence(usize),
    #[error("part {0} would leave the grid; raise the resolution or shrink the object")]
    GridOverflow(u32),
    #[error("record lists {expected} parts, got {got}")]
    PartCountMismatch { expected: usize, got: usize },
    #[error("part id {got} does not match record entry {expected}")]
    PartIdMismatch { expected: u32, got: u32 },
    #[error("parts have mixed resolutions")]
    ResolutionMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplodeConfig {
    /// Required box gap in empty cell layers.
    pub margin: u32,
    /// Step in world units; `None` means one cell.
    pub step: Option<f64>,
    /// Defaults to `4 R`.
    pub max_rounds: Option<usize>,
}

impl Default for ExplodeConfig {
    fn default() -> Self {
        ExplodeConfig { margin: DEFAULT_MARGIN, step: None, max_rounds: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub id: u32,
    pub u: [f64; 3],
    pub d: f64,
}

/// Per-part direction and distance plus grid metadata. Serialized as
/// `{parts: [{id, u, d}], resolution, margin, step}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionRecord {
    pub parts: Vec<RecordEntry>,
    pub resolution: u32,
    pub margin: u32,
    pub step: f64,
}

impl ExplosionRecord {
    pub fn direction(&self, k: usize) -> Vec3 {
        from_array(self.parts[k].u)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }

    pub fn from_json(text: &str) -> Result<ExplosionRecord, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplodedState {
    pub parts: Vec<PartOccupancy>,
    pub record: ExplosionRecord,
}

/// `k`-th point of a fixed 32-point Fibonacci sphere.
pub fn fallback_direction(k: usize) -> Vec3 {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let i = (k % FALLBACK_COUNT) as f64;
    let z = 1.0 - (2.0 * i + 1.0) / FALLBACK_COUNT as f64;
    let r = (1.0 - z * z).sqrt();
    let phi = golden * i;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// World-space centre of the union of all part boxes.
pub fn global_center(parts: &[PartOccupancy]) -> Vec3 {
    let mut b = parts[0].voxel_aabb();
    for p in &parts[1..] {
        let q = p.voxel_aabb();
        for a in 0..3 {
            b.min[a] = b.min[a].min(q.min[a]);
            b.max[a] = b.max[a].max(q.max[a]);
        }
    }
    b.world_center(parts[0].resolution())
}

pub fn explosion_directions(parts: &[PartOccupancy]) -> Vec<Vec3> {
    if parts.is_empty() {
        return Vec::new();
    }
    let gc = global_center(parts);
    parts
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let d = p.world_center() - gc;
            let n = d.norm();
            if n < CENTER_EPS {
                fallback_direction(k)
            } else {
                d / n
            }
        })
        .collect()
}

fn separated(a: &VoxelBox, b: &VoxelBox, margin: u32) -> bool {
    // a box gap >= margin >= 0 on any axis also rules out shared cells
    a.max_gap(b) >= margin as i32
}

/// Whether `a` and `b` satisfy the exploded-state separation invariant.
pub fn pair_separated(a: &PartOccupancy, b: &PartOccupancy, margin: u32) -> bool {
    separated(&a.voxel_aabb(), &b.voxel_aabb(), margin) && !a.collides(b)
}

fn place(part: &PartOccupancy, u: &Vec3, d: f64) -> Result<PartOccupancy, ExplodeError> {
    let shift = quantize_offset(&(u * d), part.resolution());
    let moved = part.shift_cells(shift);
    match moved.occupancy {
        Some(p) if moved.clipped == 0 => Ok(p),
        _ => Err(ExplodeError::GridOverflow(part.part_id())),
    }
}

pub fn optimize_explosion(
    parts: &[PartOccupancy],
    config: &ExplodeConfig,
) -> Result<ExplodedState, ExplodeError> {
    let first = parts.first().ok_or(ExplodeError::NoParts)?;
    let resolution = first.resolution();
    if parts.iter().any(|p| p.resolution() != resolution) {
        return Err(ExplodeError::ResolutionMismatch);
    }
    let step = config.step.unwrap_or_else(|| cell_size(resolution));
    if !(step > 0.0) || !step.is_finite() {
        return Err(ExplodeError::BadStep(step));
    }
    let max_rounds = config.max_rounds.unwrap_or(4 * resolution as usize);

    let dirs = explosion_directions(parts);
    let gc = global_center(parts);
    let dist: Vec<f64> = parts.iter().map(|p| (p.world_center() - gc).norm()).collect();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        dist[a].total_cmp(&dist[b]).then(parts[a].part_id().cmp(&parts[b].part_id()))
    });

    let mut steps = vec![0u64; parts.len()];
    let mut current: Vec<PartOccupancy> = parts.to_vec();
    let mut converged = false;
    for _ in 0..max_rounds {
        let mut moved = false;
        for &k in &order {
            let blocked = (0..parts.len()).any(|j| {
                j != k && dist[j] <= dist[k] && !pair_separated(&current[k], &current[j], config.margin)
            });
            if blocked {
                steps[k] += 1;
                current[k] = place(&parts[k], &dirs[k], steps[k] as f64 * step)?;
                moved = true;
            }
        }
        if !moved {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ExplodeError::NoConvergence(max_rounds));
    }

    let record = ExplosionRecord {
        parts: parts
            .iter()
            .enumerate()
            .map(|(k, p)| RecordEntry { id: p.part_id(), u: to_array(&dirs[k]), d: steps[k] as f64 * step })
            .collect(),
        resolution,
        margin: config.margin,
        step,
    };
    Ok(ExplodedState { parts: current, record })
}

/// Translates each part by `sign * d_k * u_k`. With `sign = 1` on the
/// original parts this reproduces the exploded layout cell for cell.
pub fn apply_record(
    parts: &[PartOccupancy],
    record: &ExplosionRecord,
    sign: f64,
) -> Result<Vec<PartOccupancy>, ExplodeError> {
    if parts.len() != record.parts.len() {
        return Err(ExplodeError::PartCountMismatch { expected: record.parts.len(), got: parts.len() });
    }
    parts
        .iter()
        .zip(&record.parts)
        .map(|(p, e)| {
            if p.part_id() != e.id {
                return Err(ExplodeError::PartIdMismatch { expected: e.id, got: p.part_id() });
            }
            place(p, &from_array(e.u), sign * e.d)
        })
        .collect()
}
