//! Collision-stopped implosion.
//!
//! Starting from the exploded layout, every part steps back toward the
//! centre along its recorded direction, `m_k^{j+1} = m_k^j - alpha * u_k`.
//! Each round visits the unfrozen parts nearest-first. A step that would
//! make the part share a cell with any other part is rolled back and the
//! part freezes (`Collision`); a part whose travel has covered its recorded
//! distance freezes with `ReachedZero`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explode::{global_center, ExplosionRecord};
use crate::voxel::{cell_size, quantize_offset, PartOccupancy};

#[derive(Debug, Error, PartialEq)]
pub enum ImplodeError {
    #[error("record has {record} parts but {got} completed parts were given")]
    RecordMismatch { record: usize, got: usize },
    #[error("part id {got} does not match record entry {expected}")]
    IdMismatch { expected: u32, got: u32 },
    #[error("completed parts use resolution {got}, record says {record}")]
    GridMismatch { record: u32, got: u32 },
    #[error("alpha must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("max_iterations must be at least 1")]
    BadIterations,
    #[error("parts {0} and {1} already overlap in the exploded layout")]
    InitialOverlap(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Collision,
    ReachedZero,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Voxel,
    Aabb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Each part freezes on its own first collision.
    #[default]
    PerPart,
    /// The first collision freezes every part.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImplodeConfig {
    /// World units; `None` means one cell.
    pub alpha: Option<f64>,
    /// `None` means `ceil(max d / alpha) + R`.
    pub max_iterations: Option<usize>,
    pub granularity: Granularity,
    pub stop_mode: StopMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplodedState {
    pub parts: Vec<PartOccupancy>,
    pub steps: Vec<usize>,
    pub reasons: Vec<StopReason>,
    pub alpha: f64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplodePartReport {
    pub id: u32,
    pub steps: usize,
    pub reason: StopReason,
    pub recorded_distance: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplodeReport {
    pub alpha: f64,
    pub rounds: usize,
    pub granularity: Granularity,
    pub stop_mode: StopMode,
    pub parts: Vec<ImplodePartReport>,
}

impl ImplodedState {
    pub fn report(&self, record: &ExplosionRecord, cfg: &ImplodeConfig) -> ImplodeReport {
        ImplodeReport {
            alpha: self.alpha,
            rounds: self.rounds,
            granularity: cfg.granularity,
            stop_mode: cfg.stop_mode,
            parts: record
                .parts
                .iter()
                .enumerate()
                .map(|(k, e)| ImplodePartReport {
                    id: e.id,
                    steps: self.steps[k],
                    reason: self.reasons[k],
                    recorded_distance: e.d,
                    residual: e.d - self.steps[k] as f64 * self.alpha,
                })
                .collect(),
        }
    }
}

/// Part ids by increasing distance of their box centre from the centre of
/// the union box; ties by id.
pub fn sort_by_center_distance(parts: &[PartOccupancy]) -> Vec<u32> {
    order_by_distance(parts).into_iter().map(|k| parts[k].part_id()).collect()
}

fn order_by_distance(parts: &[PartOccupancy]) -> Vec<usize> {
    if parts.is_empty() {
        return Vec::new();
    }
    let gc = global_center(parts);
    let dist: Vec<f64> = parts.iter().map(|p| (p.world_center() - gc).norm()).collect();
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| {
        dist[a].total_cmp(&dist[b]).then(parts[a].part_id().cmp(&parts[b].part_id()))
    });
    order
}

fn collide(a: &PartOccupancy, b: &PartOccupancy, g: Granularity) -> bool {
    match g {
        Granularity::Voxel => a.collides(b),
        Granularity::Aabb => a.voxel_aabb().intersects(&b.voxel_aabb()),
    }
}

fn any_overlap(parts: &[PartOccupancy], g: Granularity) -> Option<(u32, u32)> {
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if collide(&parts[i], &parts[j], g) {
                return Some((parts[i].part_id(), parts[j].part_id()));
            }
        }
    }
    None
}

/// Implodes `completed` (the completed parts in their exploded positions,
/// in record order) using the directions and distances of `record`.
pub fn implode(
    record: &ExplosionRecord,
    completed: &[PartOccupancy],
    config: &ImplodeConfig,
) -> Result<ImplodedState, ImplodeError> {
    if completed.len() != record.parts.len() {
        return Err(ImplodeError::RecordMismatch { record: record.parts.len(), got: completed.len() });
    }
    for (p, e) in completed.iter().zip(&record.parts) {
        if p.part_id() != e.id {
            return Err(ImplodeError::IdMismatch { expected: e.id, got: p.part_id() });
        }
        if p.resolution() != record.resolution {
            return Err(ImplodeError::GridMismatch { record: record.resolution, got: p.resolution() });
        }
    }
    let alpha = config.alpha.unwrap_or_else(|| cell_size(record.resolution));
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ImplodeError::BadAlpha(alpha));
    }
    let max_d = record.parts.iter().map(|e| e.d).fold(0.0, f64::max);
    let max_iterations = match config.max_iterations {
        Some(0) => return Err(ImplodeError::BadIterations),
        Some(n) => n,
        None => (max_d / alpha).ceil() as usize + record.resolution as usize,
    };
    if let Some((a, b)) = any_overlap(completed, config.granularity) {
        return Err(ImplodeError::InitialOverlap(a, b));
    }

    let k_count = completed.len();
    let mut current: Vec<PartOccupancy> = completed.to_vec();
    let mut steps = vec![0usize; k_count];
    let mut reasons: Vec<Option<StopReason>> = vec![None; k_count];
    let mut rounds = 0;

    let position = |k: usize, j: usize| -> Option<PartOccupancy> {
        let offset = -(record.direction(k) * (j as f64 * alpha));
        let moved = completed[k].shift_cells(quantize_offset(&offset, record.resolution));
        moved.occupancy.filter(|_| moved.clipped == 0)
    };

    'rounds: while rounds < max_iterations && reasons.iter().any(Option::is_none) {
        rounds += 1;
        for k in order_by_distance(&current) {
            if reasons[k].is_some() {
                continue;
            }
            let next = steps[k] + 1;
            // residual after the step must stay >= -alpha/2
            if next as f64 * alpha > record.parts[k].d + 0.5 * alpha {
                reasons[k] = Some(StopReason::ReachedZero);
                continue;
            }
            let candidate = position(k, next);
            let hit = match &candidate {
                None => true,
                Some(c) => (0..k_count).any(|j| j != k && collide(c, &current[j], config.granularity)),
            };
            if hit {
                match config.stop_mode {
                    StopMode::PerPart => reasons[k] = Some(StopReason::Collision),
                    StopMode::Global => {
                        for r in reasons.iter_mut().filter(|r| r.is_none()) {
                            *r = Some(StopReason::Collision);
                        }
                        break 'rounds;
                    }
                }
            } else {
                steps[k] = next;
                current[k] = candidate.expect("checked above");
            }
        }
        debug_assert!(any_overlap(&current, config.granularity).is_none());
    }

    let reasons = reasons.into_iter().map(|r| r.unwrap_or(StopReason::MaxIterations)).collect();
    Ok(ImplodedState { parts: current, steps, reasons, alpha, rounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explode::{optimize_explosion, ExplodeConfig, RecordEntry};
    use crate::mesh::TriMesh;
    use crate::voxel::voxelize;

    fn cube(id: u32, min: [f64; 3], max: [f64; 3], r: u32) -> PartOccupancy {
        voxelize(&TriMesh::cuboid(min, max), id, r).unwrap()
    }

    #[test]
    fn single_part_returns_home() {
        let r = 32;
        let alpha = cell_size(r);
        let home = cube(0, [-0.3; 3], [0.1; 3], r);
        let record = ExplosionRecord {
            parts: vec![RecordEntry { id: 0, u: [0.0, 1.0, 0.0], d: 10.0 * alpha }],
            resolution: r,
            margin: 2,
            step: alpha,
        };
        let exploded = home.shift_cells([0, 10, 0]).occupancy.unwrap();
        let s = implode(&record, &[exploded], &ImplodeConfig::default()).unwrap();
        assert_eq!(s.steps, vec![10]);
        assert_eq!(s.reasons, vec![StopReason::ReachedZero]);
        assert_eq!(s.parts[0], home);
    }

    fn touching_pair(r: u32) -> Vec<PartOccupancy> {
        vec![
            cube(0, [-0.75, -0.25, -0.25], [0.0, 0.25, 0.25], r),
            cube(1, [0.0, -0.25, -0.25], [0.75, 0.25, 0.25], r),
        ]
    }

    #[test]
    fn touching_pair_lands_touching() {
        let r = 64;
        let parts = touching_pair(r);
        let ex = optimize_explosion(&parts, &ExplodeConfig::default()).unwrap();
        let s = implode(&ex.record, &ex.parts, &ImplodeConfig::default()).unwrap();
        assert!(!s.parts[0].collides(&s.parts[1]));
        assert!(s.parts[0].voxel_aabb().max_gap(&s.parts[1].voxel_aabb()) <= 1);
        for reason in &s.reasons {
            assert!(matches!(reason, StopReason::Collision | StopReason::ReachedZero));
        }
    }

    #[test]
    fn enlarged_completion_stops_earlier() {
        let r = 64;
        let parts = touching_pair(r);
        let ex = optimize_explosion(&parts, &ExplodeConfig::default()).unwrap();
        let identity = implode(&ex.record, &ex.parts, &ImplodeConfig::default()).unwrap();

        // grow part 0 by two cell layers toward part 1 (+x)
        let mut grown = ex.parts[0].cells().clone();
        let b = ex.parts[0].voxel_aabb();
        for c in ex.parts[0].cells().iter().filter(|c| c[0] == b.max[0]) {
            grown.insert([c[0] + 1, c[1], c[2]]);
            grown.insert([c[0] + 2, c[1], c[2]]);
        }
        let mut completed = ex.parts.clone();
        completed[0] = PartOccupancy::new(0, r, grown).unwrap();
        let bigger = implode(&ex.record, &completed, &ImplodeConfig::default()).unwrap();

        assert!(bigger.reasons.contains(&StopReason::Collision));
        let travelled = |s: &ImplodedState| s.steps.iter().sum::<usize>();
        assert!(travelled(&identity) >= travelled(&bigger) + 2);
        assert!(!bigger.parts[0].collides(&bigger.parts[1]));
    }

    #[test]
    fn sort_by_distance_and_ties() {
        let near = PartOccupancy::from_cells(5, 16, [[8, 8, 8]]).unwrap();
        let far = PartOccupancy::from_cells(2, 16, [[15, 8, 8]]).unwrap();
        let anchor = PartOccupancy::from_cells(9, 16, [[0, 8, 8]]).unwrap();
        // union centre is the origin; anchor and far are equidistant
        assert_eq!(sort_by_center_distance(&[far.clone(), near.clone(), anchor.clone()]), vec![5, 2, 9]);
        let a = PartOccupancy::from_cells(3, 8, [[0, 3, 3]]).unwrap();
        let b = PartOccupancy::from_cells(1, 8, [[7, 3, 3]]).unwrap();
        assert_eq!(sort_by_center_distance(&[a, b]), vec![1, 3]);
    }

    #[test]
    fn global_stop_freezes_everyone() {
        let r = 64;
        let mut parts = touching_pair(r);
        parts.push(cube(2, [-0.2, 0.4, -0.2], [0.2, 0.7, 0.2], r));
        let ex = optimize_explosion(&parts, &ExplodeConfig::default()).unwrap();
        let cfg = ImplodeConfig { stop_mode: StopMode::Global, ..Default::default() };
        let s = implode(&ex.record, &ex.parts, &cfg).unwrap();
        assert!(s.reasons.iter().all(|r| *r != StopReason::MaxIterations));
        assert!(s.reasons.contains(&StopReason::Collision));
    }

    #[test]
    fn validation_errors() {
        let r = 16;
        let p = cube(0, [-0.5; 3], [0.5; 3], r);
        let record = ExplosionRecord {
            parts: vec![RecordEntry { id: 0, u: [1.0, 0.0, 0.0], d: 0.0 }],
            resolution: r,
            margin: 2,
            step: cell_size(r),
        };
        assert!(matches!(implode(&record, &[], &ImplodeConfig::default()), Err(ImplodeError::RecordMismatch { .. })));
        let other_res = cube(0, [-0.5; 3], [0.5; 3], 8);
        assert!(matches!(
            implode(&record, &[other_res], &ImplodeConfig::default()),
            Err(ImplodeError::GridMismatch { .. })
        ));
        let cfg = ImplodeConfig { alpha: Some(-1.0), ..Default::default() };
        assert_eq!(implode(&record, std::slice::from_ref(&p), &cfg), Err(ImplodeError::BadAlpha(-1.0)));
        let s = implode(&record, &[p], &ImplodeConfig::default()).unwrap();
        assert_eq!(s.reasons, vec![StopReason::ReachedZero]);
        assert_eq!(s.steps, vec![0]);
    }

    #[test]
    fn max_iterations_reason() {
        let r = 32;
        let alpha = cell_size(r);
        let home = cube(0, [-0.3; 3], [0.1; 3], r);
        let record = ExplosionRecord {
            parts: vec![RecordEntry { id: 0, u: [0.0, 1.0, 0.0], d: 10.0 * alpha }],
            resolution: r,
            margin: 2,
            step: alpha,
        };
        let exploded = home.shift_cells([0, 10, 0]).occupancy.unwrap();
        let cfg = ImplodeConfig { max_iterations: Some(4), ..Default::default() };
        let s = implode(&record, &[exploded], &cfg).unwrap();
        assert_eq!(s.steps, vec![4]);
        assert_eq!(s.reasons, vec![StopReason::MaxIterations]);
    }
}
