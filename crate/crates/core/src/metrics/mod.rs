//! Point-cloud and voxel metrics, the two closed-form training losses, and
//! part/object evaluation.
//!
//! A point counts toward an F-Score when its nearest-neighbour distance is
//! strictly below the radius.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::voxel::VoxelSet;

mod evaluate;
mod kdtree;

pub use evaluate::{
    evaluate, sample_object, voxel_surface_mesh, EvalConfig, EvalGeometry, EvalPart, EvaluationReport, MetricsReport, Normalization,
    PairReport, PartLevelReport,
};
pub use kdtree::KdTree;

/// Radii of the point-cloud F-Scores, largest first.
pub const F_RADII: [f64; 3] = [0.1, 0.05, 0.01];
pub const VOXEL_F_RADIUS: f64 = 0.01;
pub const DEFAULT_POINTS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("voxel resolutions differ: {0} vs {1}")]
    ResolutionMismatch(u32, u32),
    #[error("length mismatch: {pred} predictions, {truth} targets")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("dimension mismatch: {0:?}")]
    DimensionMismatch(Vec<usize>),
    #[error("empty input")]
    EmptyInput,
}

pub type MetricsResult<T> = Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CdConvention {
    /// `(mean_a min_b |a-b| + mean_b min_a |b-a|) / 2`
    #[default]
    Mean,
    /// `mean_a min_b |a-b| + mean_b min_a |b-a|`
    Sum,
    /// `(mean_a min_b |a-b|^2 + mean_b min_a |b-a|^2) / 2`
    Squared,
}

/// Sampled points plus the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub seed: Option<u64>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, seed: Option<u64>) -> MetricsResult<PointCloud> {
        if points.is_empty() {
            return Err(MetricsError::EmptyCloud);
        }
        Ok(PointCloud { points, seed })
    }
}

/// Nearest-neighbour distances from every point of `from` into `to`.
pub fn nn_distances(from: &[Vec3], to: &KdTree) -> Vec<f64> {
    from.par_iter().map(|p| to.nearest(p)).collect()
}

/// Nearest-neighbour distances in both directions, with both trees built once.
pub struct CloudPair {
    pub ab: Vec<f64>,
    pub ba: Vec<f64>,
}

impl CloudPair {
    pub fn new(a: &[Vec3], b: &[Vec3]) -> MetricsResult<CloudPair> {
        if a.is_empty() || b.is_empty() {
            return Err(MetricsError::EmptyCloud);
        }
        let (ta, tb) = rayon::join(|| KdTree::new(a), || KdTree::new(b));
        let (ab, ba) = rayon::join(|| nn_distances(a, &tb), || nn_distances(b, &ta));
        Ok(CloudPair { ab, ba })
    }

    pub fn chamfer(&self, convention: CdConvention) -> f64 {
        let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
        let mean_sq = |d: &[f64]| d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        match convention {
            CdConvention::Mean => 0.5 * (mean(&self.ab) + mean(&self.ba)),
            CdConvention::Sum => mean(&self.ab) + mean(&self.ba),
            CdConvention::Squared => 0.5 * (mean_sq(&self.ab) + mean_sq(&self.ba)),
        }
    }

    pub fn f_score(&self, r: f64) -> MetricsResult<f64> {
        if !(r > 0.0) {
            return Err(MetricsError::BadRadius(r));
        }
        let within = |d: &[f64]| d.iter().filter(|x| **x < r).count() as f64 / d.len() as f64;
        Ok(harmonic(within(&self.ab), within(&self.ba)))
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn chamfer_distance(a: &[Vec3], b: &[Vec3], convention: CdConvention) -> MetricsResult<f64> {
    Ok(CloudPair::new(a, b)?.chamfer(convention))
}

pub fn f_score(a: &[Vec3], b: &[Vec3], r: f64) -> MetricsResult<f64> {
    if !(r > 0.0) {
        return Err(MetricsError::BadRadius(r));
    }
    CloudPair::new(a, b)?.f_score(r)
}

/// `|A n B| / |A u B|`; 1.0 when both are empty.
pub fn voxel_iou(a: &VoxelSet, b: &VoxelSet) -> MetricsResult<f64> {
    if a.resolution != b.resolution {
        return Err(MetricsError::ResolutionMismatch(a.resolution, b.resolution));
    }
    if a.cells.is_empty() && b.cells.is_empty() {
        return Ok(1.0);
    }
    let inter = a.cells.intersection(&b.cells).count();
    let union = a.cells.len() + b.cells.len() - inter;
    Ok(inter as f64 / union as f64)
}

/// Point F-Score on cell centres. Both empty scores 1.0, one empty 0.0.
pub fn voxel_f_score(a: &VoxelSet, b: &VoxelSet, r: f64) -> MetricsResult<f64> {
    if a.resolution != b.resolution {
        return Err(MetricsError::ResolutionMismatch(a.resolution, b.resolution));
    }
    match (a.cells.is_empty(), b.cells.is_empty()) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        _ => f_score(&a.centers(), &b.centers(), r),
    }
}

/// Mean over samples of the L1 distance between RGB colours.
pub fn seg_l1_loss(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> MetricsResult<f64> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), truth: truth.len() });
    }
    if pred.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let total: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p[0] - t[0]).abs() + (p[1] - t[1]).abs() + (p[2] - t[2]).abs())
        .sum();
    Ok(total / pred.len() as f64)
}

/// `|v - (eps - x0)|^2`.
pub fn cfm_loss(v: &[f64], x0: &[f64], eps: &[f64]) -> MetricsResult<f64> {
    if v.len() != x0.len() || v.len() != eps.len() {
        return Err(MetricsError::DimensionMismatch(vec![v.len(), x0.len(), eps.len()]));
    }
    Ok(v.iter().zip(x0).zip(eps).map(|((v, x), e)| (v - (e - x)).powi(2)).sum())
}

/// Mean of [`cfm_loss`] over a batch.
pub fn cfm_loss_batch(v: &[Vec<f64>], x0: &[Vec<f64>], eps: &[Vec<f64>]) -> MetricsResult<f64> {
    if v.len() != x0.len() || v.len() != eps.len() {
        return Err(MetricsError::DimensionMismatch(vec![v.len(), x0.len(), eps.len()]));
    }
    if v.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut total = 0.0;
    for i in 0..v.len() {
        total += cfm_loss(&v[i], &x0[i], &eps[i])?;
    }
    Ok(total / v.len() as f64)
}
