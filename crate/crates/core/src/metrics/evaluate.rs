//! Object-level and part-level evaluation of a predicted part set against
//! ground truth.
//!
//! Every part is reduced to a surface (voxel parts use their boundary faces)
//! and a voxel set in a shared grid frame. Surfaces are sampled with seeds
//! derived from `seed` and the part's geometry, never its id or list
//! position, so reports are invariant to relabelling and reordering.
//! Part-level pairs come from greedy highest-IoU matching.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{voxel_f_score, voxel_iou, CdConvention, CloudPair, MetricsError, MetricsResult, F_RADII, VOXEL_F_RADIUS};
use crate::geom::{Similarity, Vec3};
use crate::mesh::{sample_surface, TriMesh};
use crate::voxel::{cell_size, voxelize_cells, Cell, PartOccupancy, VoxelSet, DEFAULT_RESOLUTION};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalGeometry {
    Mesh(TriMesh),
    Voxels(PartOccupancy),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPart {
    pub id: u32,
    pub geometry: EvalGeometry,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// Map both sides with the transform taking the ground-truth box to the
    /// unit cube. Applies only when every part is a mesh; voxel parts are
    /// already in the grid frame.
    #[default]
    Gt,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub points: usize,
    pub seed: u64,
    /// Grid used for mesh-only inputs; voxel inputs impose their own.
    pub resolution: u32,
    pub cd: CdConvention,
    pub normalization: Normalization,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            points: super::DEFAULT_POINTS,
            seed: 7,
            resolution: DEFAULT_RESOLUTION,
            cd: CdConvention::Mean,
            normalization: Normalization::Gt,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Part,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub level: Level,
    #[serde(rename = "Voxel IOU")]
    pub voxel_iou: f64,
    /// Absent for aggregates that include unmatched parts.
    #[serde(rename = "CD")]
    pub cd: Option<f64>,
    #[serde(rename = "Voxel F-Score 0.01")]
    pub voxel_fscore_001: f64,
    #[serde(rename = "F-Score 0.1")]
    pub fscore_01: f64,
    #[serde(rename = "F-Score 0.05")]
    pub fscore_005: f64,
    #[serde(rename = "F-Score 0.01")]
    pub fscore_001: f64,
    /// Set when the IoU was computed on two empty voxel sets.
    pub iou_both_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pred: u32,
    pub gt: u32,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartLevelReport {
    /// Mean over matched pairs; absent when nothing matched.
    pub matched: Option<MetricsReport>,
    /// Mean over all ground-truth parts, unmatched ones scoring zero.
    pub all_gt: MetricsReport,
    pub pairs: Vec<PairReport>,
    pub unmatched_pred: Vec<u32>,
    pub unmatched_gt: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub cd_convention: CdConvention,
    pub points: usize,
    pub seed: u64,
    pub resolution: u32,
    pub matching: String,
    pub overall: MetricsReport,
    pub part: PartLevelReport,
}

/// Outward boundary faces of a cell set, two triangles per exposed face.
pub fn voxel_surface_mesh(set: &VoxelSet) -> TriMesh {
    let c = cell_size(set.resolution);
    let corner = |cell: Cell, d: [i32; 3]| {
        Vec3::new(
            -1.0 + (cell[0] + d[0]) as f64 * c,
            -1.0 + (cell[1] + d[1]) as f64 * c,
            -1.0 + (cell[2] + d[2]) as f64 * c,
        )
    };
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for cell in &set.cells {
        for axis in 0..3 {
            for positive in [false, true] {
                let mut n = *cell;
                n[axis] += if positive { 1 } else { -1 };
                if set.cells.contains(&n) {
                    continue;
                }
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut q = [[0i32; 3]; 4];
                for (k, (du, dv)) in [(0, 0), (1, 0), (1, 1), (0, 1)].into_iter().enumerate() {
                    q[k][axis] = positive as i32;
                    q[k][u] = du;
                    q[k][v] = dv;
                }
                let base = vertices.len() as u32;
                vertices.extend(q.iter().map(|d| corner(*cell, *d)));
                // (u, v, axis) is right-handed, so u-then-v winding faces +axis
                if positive {
                    triangles.push([base, base + 1, base + 2]);
                    triangles.push([base, base + 2, base + 3]);
                } else {
                    triangles.push([base, base + 2, base + 1]);
                    triangles.push([base, base + 3, base + 2]);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles).expect("faces index their own vertices")
}

struct Prepared {
    id: u32,
    surface: TriMesh,
    voxels: VoxelSet,
    hash: [u8; 32],
}

fn geometry_hash(mesh: &TriMesh) -> [u8; 32] {
    let mut h = Sha256::new();
    for tri in mesh.triangle_positions() {
        for v in tri {
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
    }
    h.finalize().into()
}

fn derive_seed(seed: u64, hash: &[u8; 32]) -> u64 {
    seed ^ u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
}

fn grid_resolution(parts: &[&EvalPart], fallback: u32) -> MetricsResult<(u32, bool)> {
    let mut found: Option<u32> = None;
    for p in parts {
        if let EvalGeometry::Voxels(o) = &p.geometry {
            match found {
                None => found = Some(o.resolution()),
                Some(r) if r != o.resolution() => return Err(MetricsError::ResolutionMismatch(r, o.resolution())),
                _ => {}
            }
        }
    }
    Ok((found.unwrap_or(fallback), found.is_some()))
}

fn prepare(part: &EvalPart, resolution: u32, tf: &Similarity) -> Prepared {
    let (surface, voxels) = match &part.geometry {
        EvalGeometry::Mesh(m) => {
            let m = m.transformed(tf);
            let cells = voxelize_cells(&m, resolution);
            (m, VoxelSet { resolution, cells })
        }
        EvalGeometry::Voxels(o) => {
            let set = o.voxel_set();
            (voxel_surface_mesh(&set), set)
        }
    };
    let hash = geometry_hash(&surface);
    Prepared { id: part.id, surface, voxels, hash }
}

fn sample(surface: &TriMesh, n: usize, seed: u64) -> MetricsResult<Vec<Vec3>> {
    let pts = sample_surface(surface, n, seed).map_err(|_| MetricsError::EmptyCloud)?;
    Ok(pts.into_iter().map(|s| s.position).collect())
}

/// Canonical order: geometry hash, then id.
fn canonical(parts: &mut [Prepared]) {
    parts.sort_by(|a, b| a.hash.cmp(&b.hash).then(a.id.cmp(&b.id)));
}

fn object_cloud(parts: &[Prepared], cfg: &EvalConfig) -> MetricsResult<Vec<Vec3>> {
    let merged = TriMesh::merge(parts.iter().map(|p| &p.surface));
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.hash);
    }
    sample(&merged, cfg.points, derive_seed(cfg.seed, &h.finalize().into()))
}

/// Merged-surface point cloud of an already normalized part set, exactly as
/// [`evaluate`] samples it with `Normalization::None`.
pub fn sample_object(parts: &[EvalPart], cfg: &EvalConfig) -> MetricsResult<Vec<Vec3>> {
    let refs: Vec<&EvalPart> = parts.iter().collect();
    let (resolution, _) = grid_resolution(&refs, cfg.resolution)?;
    let mut prepared: Vec<Prepared> =
        parts.par_iter().map(|p| prepare(p, resolution, &Similarity::IDENTITY)).collect();
    canonical(&mut prepared);
    object_cloud(&prepared, cfg)
}

fn union(parts: &[Prepared], resolution: u32) -> VoxelSet {
    let cells: BTreeSet<Cell> = parts.iter().flat_map(|p| p.voxels.cells.iter().copied()).collect();
    VoxelSet { resolution, cells }
}

fn score(
    level: Level,
    va: &VoxelSet,
    vb: &VoxelSet,
    ca: &[Vec3],
    cb: &[Vec3],
    cfg: &EvalConfig,
) -> MetricsResult<MetricsReport> {
    let pair = CloudPair::new(ca, cb)?;
    Ok(MetricsReport {
        level,
        voxel_iou: voxel_iou(va, vb)?,
        cd: Some(pair.chamfer(cfg.cd)),
        voxel_fscore_001: voxel_f_score(va, vb, VOXEL_F_RADIUS)?,
        fscore_01: pair.f_score(F_RADII[0])?,
        fscore_005: pair.f_score(F_RADII[1])?,
        fscore_001: pair.f_score(F_RADII[2])?,
        iou_both_empty: va.cells.is_empty() && vb.cells.is_empty(),
    })
}

fn mean_report(reports: &[&MetricsReport], denom: usize, with_cd: bool) -> MetricsReport {
    let n = denom as f64;
    let avg = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
    MetricsReport {
        level: Level::Part,
        voxel_iou: avg(&|r| r.voxel_iou),
        cd: with_cd.then(|| avg(&|r| r.cd.unwrap_or(0.0))),
        voxel_fscore_001: avg(&|r| r.voxel_fscore_001),
        fscore_01: avg(&|r| r.fscore_01),
        fscore_005: avg(&|r| r.fscore_005),
        fscore_001: avg(&|r| r.fscore_001),
        iou_both_empty: reports.iter().any(|r| r.iou_both_empty),
    }
}

pub fn evaluate(pred: &[EvalPart], gt: &[EvalPart], cfg: &EvalConfig) -> MetricsResult<EvaluationReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let all: Vec<&EvalPart> = pred.iter().chain(gt).collect();
    let (resolution, has_voxels) = grid_resolution(&all, cfg.resolution)?;

    let tf = match cfg.normalization {
        Normalization::Gt if !has_voxels => {
            let gt_mesh = TriMesh::merge(gt.iter().map(|p| match &p.geometry {
                EvalGeometry::Mesh(m) => m,
                EvalGeometry::Voxels(_) => unreachable!("mesh-only branch"),
            }));
            let bb = gt_mesh.aabb().map_err(|_| MetricsError::EmptyInput)?;
            Similarity::normalizing(&bb).ok_or(MetricsError::EmptyInput)?
        }
        _ => Similarity::IDENTITY,
    };

    let mut p: Vec<Prepared> = pred.par_iter().map(|x| prepare(x, resolution, &tf)).collect();
    let mut g: Vec<Prepared> = gt.par_iter().map(|x| prepare(x, resolution, &tf)).collect();
    canonical(&mut p);
    canonical(&mut g);

    let (pc, gc) = rayon::join(|| object_cloud(&p, cfg), || object_cloud(&g, cfg));
    let (pc, gc) = (pc?, gc?);
    let overall = score(Level::Overall, &union(&p, resolution), &union(&g, resolution), &pc, &gc, cfg)?;

    // greedy matching on IoU > 0; ties resolve to the earliest canonical pair
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, gp) in g.iter().enumerate() {
        for (pi, pp) in p.iter().enumerate() {
            let iou = voxel_iou(&pp.voxels, &gp.voxels)?;
            if iou > 0.0 {
                cand.push((iou, gi, pi));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_p = vec![false; p.len()];
    let mut used_g = vec![false; g.len()];
    let mut matches = Vec::new();
    for (_, gi, pi) in cand {
        if !used_p[pi] && !used_g[gi] {
            used_p[pi] = true;
            used_g[gi] = true;
            matches.push((pi, gi));
        }
    }

    let pair_reports: Vec<MetricsResult<PairReport>> = matches
        .par_iter()
        .map(|&(pi, gi)| {
            let a = sample(&p[pi].surface, cfg.points, derive_seed(cfg.seed, &p[pi].hash))?;
            let b = sample(&g[gi].surface, cfg.points, derive_seed(cfg.seed, &g[gi].hash))?;
            Ok(PairReport {
                pred: p[pi].id,
                gt: g[gi].id,
                metrics: score(Level::Part, &p[pi].voxels, &g[gi].voxels, &a, &b, cfg)?,
            })
        })
        .collect();
    let mut pairs = pair_reports.into_iter().collect::<MetricsResult<Vec<_>>>()?;
    pairs.sort_by_key(|r| (r.gt, r.pred));

    let refs: Vec<&MetricsReport> = pairs.iter().map(|r| &r.metrics).collect();
    let matched = (!refs.is_empty()).then(|| mean_report(&refs, refs.len(), true));
    let all_gt = mean_report(&refs, g.len(), false);
    let mut unmatched_pred: Vec<u32> = p.iter().zip(&used_p).filter(|(_, u)| !**u).map(|(x, _)| x.id).collect();
    let mut unmatched_gt: Vec<u32> = g.iter().zip(&used_g).filter(|(_, u)| !**u).map(|(x, _)| x.id).collect();
    unmatched_pred.sort_unstable();
    unmatched_gt.sort_unstable();

    Ok(EvaluationReport {
        cd_convention: cfg.cd,
        points: cfg.points,
        seed: cfg.seed,
        resolution,
        matching: "greedy_voxel_iou".into(),
        overall,
        part: PartLevelReport { matched, all_gt, pairs, unmatched_pred, unmatched_gt },
    })
}
