//! Dataset preparation: part-count filtering, connectivity splitting and
//! merging of excess sub-meshes down to a part budget.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Aabb, Similarity};
use crate::mesh::{split_connected_components, Part, PartSet, TriMesh};
use crate::voxel::{voxelize_cells, Cell};

pub const DEFAULT_MAX_PARTS: usize = 20;
pub const CURATION_RESOLUTION: u32 = 32;

#[derive(Debug, Error, PartialEq)]
pub enum CurationError {
    #[error("max_parts must be at least 1")]
    BadMaxParts,
    #[error("sort weights must be non-negative and not all zero: {0:?}")]
    BadWeights([f64; 3]),
    #[error("collision margin must be finite and non-negative, got {0}")]
    BadMargin(f64),
    #[error("no parts to curate")]
    NoParts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub max_parts: usize,
    /// Weights of (face count, surface area, AABB volume).
    pub sort_weights: [f64; 3],
    /// World units, applied to each AABB before the overlap pre-filter.
    pub collision_margin: f64,
    pub resolution: u32,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            max_parts: DEFAULT_MAX_PARTS,
            sort_weights: [1.0, 1.0, 1.0],
            collision_margin: 0.0,
            resolution: CURATION_RESOLUTION,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        if self.max_parts == 0 {
            return Err(CurationError::BadMaxParts);
        }
        let w = self.sort_weights;
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().all(|x| *x == 0.0) {
            return Err(CurationError::BadWeights(w));
        }
        if !(self.collision_margin >= 0.0) || !self.collision_margin.is_finite() {
            return Err(CurationError::BadMargin(self.collision_margin));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum RejectReason {
    EmptyObject,
    TooManyParts { count: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Accept,
    Reject(RejectReason),
}

pub fn filter_by_part_count(part_count: usize, max_parts: usize) -> FilterDecision {
    if part_count == 0 {
        FilterDecision::Reject(RejectReason::EmptyObject)
    } else if part_count > max_parts {
        FilterDecision::Reject(RejectReason::TooManyParts { count: part_count, max: max_parts })
    } else {
        FilterDecision::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeReason {
    Collision,
    NearestBbox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub absorbed: u32,
    pub target: u32,
    pub reason: MergeReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub input_parts: usize,
    pub output_parts: usize,
    pub merges: Vec<MergeEvent>,
}

struct Stats {
    faces: f64,
    area: f64,
    volume: f64,
}

fn stats(mesh: &TriMesh) -> Stats {
    Stats {
        faces: mesh.triangle_count() as f64,
        area: mesh.surface_area(),
        volume: mesh.aabb().map(|b| b.volume()).unwrap_or(0.0),
    }
}

fn scores(parts: &[Part], weights: [f64; 3]) -> Vec<f64> {
    let st: Vec<Stats> = parts.iter().map(|p| stats(&p.mesh)).collect();
    let max = |f: fn(&Stats) -> f64| st.iter().map(f).fold(0.0, f64::max);
    let (mf, ma, mv) = (max(|s| s.faces), max(|s| s.area), max(|s| s.volume));
    let norm = |x: f64, m: f64| if m > 0.0 { x / m } else { 0.0 };
    st.iter()
        .map(|s| weights[0] * norm(s.faces, mf) + weights[1] * norm(s.area, ma) + weights[2] * norm(s.volume, mv))
        .collect()
}

fn ranked_indices(parts: &[Part], weights: [f64; 3]) -> Vec<usize> {
    let s = scores(parts, weights);
    let mut order: Vec<usize> = (0..parts.len()).collect();
    order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(parts[a].id.cmp(&parts[b].id)));
    order
}

/// Part ids by ascending score; each criterion is divided by its maximum
/// over the parts, ties by id.
pub fn rank_parts(parts: &[Part], weights: [f64; 3]) -> Vec<u32> {
    ranked_indices(parts, weights).into_iter().map(|i| parts[i].id).collect()
}

struct Working {
    part: Part,
    aabb: Aabb,
    cells: BTreeSet<Cell>,
}

/// Absorbs the lowest-ranked part, one per step, until at most
/// `max_parts` remain. The target keeps its id and the output is ordered
/// by id.
pub fn merge_excess(parts: PartSet, config: &CurationConfig) -> Result<(PartSet, CurationReport), CurationError> {
    config.validate()?;
    if parts.is_empty() {
        return Err(CurationError::NoParts);
    }
    let input_parts = parts.len();
    let mut merges = Vec::new();

    let mut work: Vec<Working> = Vec::new();
    if parts.len() > config.max_parts {
        let whole = parts.iter().filter_map(|p| p.mesh.aabb().ok()).reduce(|a, b| a.union(&b));
        let tf = whole.and_then(|b| Similarity::normalizing(&b)).unwrap_or(Similarity::IDENTITY);
        for p in parts {
            let aabb = p.mesh.aabb().map_err(|_| CurationError::NoParts)?;
            let cells = voxelize_cells(&p.mesh.transformed(&tf), config.resolution);
            work.push(Working { part: p, aabb, cells });
        }
    } else {
        let mut out = parts;
        out.sort_by_key(|p| p.id);
        return Ok((out.clone(), CurationReport { input_parts, output_parts: out.len(), merges }));
    }

    while work.len() > config.max_parts {
        let view: Vec<Part> = work.iter().map(|w| w.part.clone()).collect();
        let low = ranked_indices(&view, config.sort_weights)[0];
        let src = &work[low];
        let inflated = src.aabb.inflate(config.collision_margin);
        let centre = src.aabb.center();

        let mut best: Option<(usize, usize, f64)> = None; // (index, overlap, distance)
        for (j, w) in work.iter().enumerate() {
            if j == low || !inflated.overlaps(&w.aabb.inflate(config.collision_margin)) {
                continue;
            }
            let overlap = src.cells.intersection(&w.cells).count();
            if overlap == 0 {
                continue;
            }
            let dist = (w.aabb.center() - centre).norm();
            let better = match best {
                None => true,
                Some((bj, bo, bd)) => {
                    overlap > bo
                        || (overlap == bo && dist < bd)
                        || (overlap == bo && dist == bd && w.part.id < work[bj].part.id)
                }
            };
            if better {
                best = Some((j, overlap, dist));
            }
        }
        let (target, reason) = match best {
            Some((j, _, _)) => (j, MergeReason::Collision),
            None => {
                let mut nearest: Option<(usize, f64)> = None;
                for (j, w) in work.iter().enumerate() {
                    if j == low {
                        continue;
                    }
                    let dist = (w.aabb.center() - centre).norm();
                    let better = match nearest {
                        None => true,
                        Some((bj, bd)) => dist < bd || (dist == bd && w.part.id < work[bj].part.id),
                    };
                    if better {
                        nearest = Some((j, dist));
                    }
                }
                (nearest.expect("at least two parts remain").0, MergeReason::NearestBbox)
            }
        };

        let absorbed = work.remove(low);
        let target = if target > low { target - 1 } else { target };
        let t = &mut work[target];
        merges.push(MergeEvent { absorbed: absorbed.part.id, target: t.part.id, reason });
        t.part.mesh.append(&absorbed.part.mesh);
        t.aabb = t.aabb.union(&absorbed.aabb);
        t.cells.extend(absorbed.cells);
    }

    let mut out: PartSet = work.into_iter().map(|w| w.part).collect();
    out.sort_by_key(|p| p.id);
    Ok((out.clone(), CurationReport { input_parts, output_parts: out.len(), merges }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuratedObject {
    pub parts: PartSet,
    pub report: CurationReport,
    pub source_objects: usize,
}

/// Filter on authored sub-object count, split into connected components,
/// then merge down to the budget.
pub fn curate(mesh: &TriMesh, config: &CurationConfig) -> Result<Result<CuratedObject, RejectReason>, CurationError> {
    config.validate()?;
    let source_objects = if mesh.is_empty() { 0 } else { mesh.source_object_count() };
    if let FilterDecision::Reject(r) = filter_by_part_count(source_objects, config.max_parts) {
        return Ok(Err(r));
    }
    let parts = split_connected_components(mesh);
    let (parts, report) = merge_excess(parts, config)?;
    Ok(Ok(CuratedObject { parts, report, source_objects }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_part(id: u32, min: [f64; 3], size: f64) -> Part {
        Part { id, mesh: TriMesh::cuboid(min, [min[0] + size, min[1] + size, min[2] + size]) }
    }

    #[test]
    fn filter_boundaries() {
        assert_eq!(filter_by_part_count(20, 20), FilterDecision::Accept);
        assert_eq!(
            filter_by_part_count(21, 20),
            FilterDecision::Reject(RejectReason::TooManyParts { count: 21, max: 20 })
        );
        assert_eq!(filter_by_part_count(0, 20), FilterDecision::Reject(RejectReason::EmptyObject));
    }

    #[test]
    fn ranking() {
        let small = cube_part(5, [0.0; 3], 0.1);
        let big = cube_part(2, [1.0; 3], 1.0);
        assert_eq!(rank_parts(&[big.clone(), small.clone()], [1.0; 3]), vec![5, 2]);
        let twin = cube_part(1, [3.0; 3], 1.0);
        assert_eq!(rank_parts(&[big.clone(), twin], [1.0; 3]), vec![1, 2]);
    }

    #[test]
    fn ranking_with_conflicting_criteria() {
        // a: many faces on a tiny area; b: one big flat quad; c: a mid cube
        let mut many = TriMesh::empty();
        for i in 0..10 {
            let x = i as f64 * 0.02;
            many.append(&TriMesh::cuboid([x, 0.0, 0.0], [x + 0.01, 0.01, 0.01]));
        }
        let flat = TriMesh::new(
            vec![
                crate::geom::Vec3::new(0.0, 0.0, 0.0),
                crate::geom::Vec3::new(4.0, 0.0, 0.0),
                crate::geom::Vec3::new(4.0, 4.0, 0.0),
                crate::geom::Vec3::new(0.0, 4.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let cube = TriMesh::cuboid([0.0; 3], [1.0; 3]);
        let parts = vec![Part { id: 0, mesh: many }, Part { id: 1, mesh: flat }, Part { id: 2, mesh: cube }];
        // faces 120/2/12, area 0.006/16/6, volume 1.9e-5/0/1: each criterion orders the parts differently
        let f = [120.0, 2.0, 12.0];
        let a = [10.0 * 6.0 * 1e-4, 16.0, 6.0];
        let v = [0.19 * 0.01 * 0.01, 0.0, 1.0];
        let score: Vec<f64> = (0..3).map(|i| f[i] / 120.0 + a[i] / 16.0 + v[i] / 1.0).collect();
        let mut expect = vec![0u32, 1, 2];
        expect.sort_by(|&x, &y| score[x as usize].total_cmp(&score[y as usize]));
        assert_eq!(rank_parts(&parts, [1.0; 3]), expect);
        assert_eq!(expect, vec![0, 1, 2]);
    }

    #[test]
    fn row_of_cubes_merges_into_neighbours() {
        let parts: PartSet = (0..25).map(|i| cube_part(i, [i as f64 * 2.0, 0.0, 0.0], 1.0)).collect();
        let (out, report) = merge_excess(parts.clone(), &CurationConfig::default()).unwrap();
        assert_eq!(out.len(), 20);
        assert_eq!(report.merges.len(), 5);
        assert!(report.merges.iter().all(|m| m.reason == MergeReason::NearestBbox));
        // the first absorbed cube goes to its row neighbour
        assert_eq!(report.merges[0], MergeEvent { absorbed: 0, target: 1, reason: MergeReason::NearestBbox });
        let absorbed: BTreeSet<u32> = report.merges.iter().map(|m| m.absorbed).collect();
        assert_eq!(absorbed.len(), 5);
        let (_, again) = merge_excess(parts, &CurationConfig::default()).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn below_threshold_unchanged() {
        let parts: PartSet = vec![cube_part(1, [0.0; 3], 1.0), cube_part(0, [3.0; 3], 1.0)];
        let (out, report) = merge_excess(parts, &CurationConfig::default()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].id, 0);
        assert!(report.merges.is_empty());
    }

    #[test]
    fn far_small_cube_goes_to_nearer_of_pair() {
        let a = cube_part(0, [0.0; 3], 1.0);
        let b = cube_part(1, [0.5, 0.0, 0.0], 1.0);
        let far = cube_part(2, [6.0, 0.0, 0.0], 0.5);
        let cfg = CurationConfig { max_parts: 2, ..Default::default() };
        let (out, report) = merge_excess(vec![a, b, far], &cfg).unwrap();
        assert_eq!(out.len(), 2);
        // centres: a 0.5, b 1.0, far 6.25 -> b is nearer
        assert_eq!(report.merges, vec![MergeEvent { absorbed: 2, target: 1, reason: MergeReason::NearestBbox }]);
    }

    #[test]
    fn colliding_part_merges_by_collision() {
        let big = cube_part(0, [0.0; 3], 1.0);
        let small = cube_part(1, [0.9, 0.4, 0.4], 0.2);
        let other = cube_part(2, [1.15, 0.0, 0.0], 1.0);
        let cfg = CurationConfig { max_parts: 2, ..Default::default() };
        let (_, report) = merge_excess(vec![big, small, other], &cfg).unwrap();
        assert_eq!(report.merges.len(), 1);
        assert_eq!(report.merges[0].absorbed, 1);
        assert_eq!(report.merges[0].reason, MergeReason::Collision);
    }

    #[test]
    fn config_validation() {
        let bad = CurationConfig { sort_weights: [0.0; 3], ..Default::default() };
        assert!(matches!(bad.validate(), Err(CurationError::BadWeights(_))));
        let bad = CurationConfig { max_parts: 0, ..Default::default() };
        assert_eq!(bad.validate(), Err(CurationError::BadMaxParts));
    }
}
