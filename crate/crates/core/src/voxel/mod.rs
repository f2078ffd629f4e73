//! Sparse voxel occupancy on the fixed normalized cube `[-1, 1]^3`.
//!
//! A grid of resolution `R` has cell size `2 / R`; cell `(i, j, k)` spans
//! `[-1 + i c, -1 + (i + 1) c]` on each axis. Part occupancies are sets of
//! cells with a single part id. [`SparseVoxelGrid`] groups several parts
//! and is what the `.voxels` text format stores.

mod io;
mod morph;
mod raster;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::geom::{Aabb, Vec3};

pub use io::{parse_voxels, write_voxels, VOXEL_HEADER};
pub use morph::{dilate, erode, morphological_close};
pub use raster::{tri_box_overlap, voxelize, voxelize_cells};

pub const DEFAULT_RESOLUTION: u32 = 64;

pub type Cell = [i32; 3];

#[derive(Debug, Error, PartialEq)]
pub enum VoxelError {
    #[error("voxelization produced no cells")]
    EmptyResult,
    #[error("occupancy has no cells")]
    EmptyCells,
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(u32, u32),
    #[error("resolution must be at least 2, got {0}")]
    BadResolution(u32),
    #[error("cell {cell:?} outside grid of resolution {resolution}")]
    OutOfRange { cell: Cell, resolution: u32 },
    #[error("parts {0} and {1} share cells in a non-overlap grid")]
    UnexpectedOverlap(u32, u32),
    #[error("duplicate part id {0}")]
    DuplicatePart(u32),
    #[error("voxel file: {0}")]
    Format(String),
}

pub type VoxelResult<T> = Result<T, VoxelError>;

pub fn cell_size(resolution: u32) -> f64 {
    2.0 / resolution as f64
}

pub fn cell_center(cell: &Cell, resolution: u32) -> Vec3 {
    let c = cell_size(resolution);
    Vec3::new(
        -1.0 + (cell[0] as f64 + 0.5) * c,
        -1.0 + (cell[1] as f64 + 0.5) * c,
        -1.0 + (cell[2] as f64 + 0.5) * c,
    )
}

fn in_grid(cell: &Cell, resolution: u32) -> bool {
    cell.iter().all(|&i| i >= 0 && (i as i64) < resolution as i64)
}

/// Quantizes a world-space offset to a whole-cell shift, rounding each axis
/// to the nearest integer (halves away from zero, so `q(-v) == -q(v)`).
pub fn quantize_offset(offset: &Vec3, resolution: u32) -> Cell {
    let c = cell_size(resolution);
    [
        (offset.x / c).round() as i32,
        (offset.y / c).round() as i32,
        (offset.z / c).round() as i32,
    ]
}

/// Inclusive integer box of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoxelBox {
    pub min: Cell,
    pub max: Cell,
}

impl VoxelBox {
    fn of(cells: &BTreeSet<Cell>) -> Option<VoxelBox> {
        let mut iter = cells.iter();
        let first = *iter.next()?;
        let mut b = VoxelBox { min: first, max: first };
        for c in iter {
            for a in 0..3 {
                b.min[a] = b.min[a].min(c[a]);
                b.max[a] = b.max[a].max(c[a]);
            }
        }
        Some(b)
    }

    pub fn intersects(&self, other: &VoxelBox) -> bool {
        (0..3).all(|a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    /// Empty cell layers between the boxes along `axis`; 0 when adjacent,
    /// negative when the projections overlap.
    pub fn gap(&self, other: &VoxelBox, axis: usize) -> i32 {
        (other.min[axis] - self.max[axis]).max(self.min[axis] - other.max[axis]) - 1
    }

    /// Largest per-axis gap; boxes are separated by `margin` iff this is `>= margin`.
    pub fn max_gap(&self, other: &VoxelBox) -> i32 {
        (0..3).map(|a| self.gap(other, a)).max().expect("three axes")
    }

    pub fn shifted(&self, d: Cell) -> VoxelBox {
        VoxelBox {
            min: [self.min[0] + d[0], self.min[1] + d[1], self.min[2] + d[2]],
            max: [self.max[0] + d[0], self.max[1] + d[1], self.max[2] + d[2]],
        }
    }

    /// Centre in world units.
    pub fn world_center(&self, resolution: u32) -> Vec3 {
        let c = cell_size(resolution);
        Vec3::from_fn(|a, _| -1.0 + (self.min[a] + self.max[a] + 1) as f64 * 0.5 * c)
    }

    /// Outer faces of the boxed cells in world units.
    pub fn world_aabb(&self, resolution: u32) -> Aabb {
        let c = cell_size(resolution);
        Aabb {
            min: Vec3::from_fn(|a, _| -1.0 + self.min[a] as f64 * c),
            max: Vec3::from_fn(|a, _| -1.0 + (self.max[a] + 1) as f64 * c),
        }
    }
}

/// A bare cell set at a resolution; may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VoxelSet {
    pub resolution: u32,
    pub cells: BTreeSet<Cell>,
}

impl VoxelSet {
    pub fn centers(&self) -> Vec<Vec3> {
        self.cells.iter().map(|c| cell_center(c, self.resolution)).collect()
    }
}

/// Occupied cells of one part. Non-empty, all cells inside the grid, with a
/// tight cached box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartOccupancy {
    part_id: u32,
    resolution: u32,
    cells: BTreeSet<Cell>,
    bbox: VoxelBox,
}

/// Result of a translation: cells pushed outside the grid are dropped and
/// counted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translated {
    pub occupancy: Option<PartOccupancy>,
    pub clipped: usize,
}

impl PartOccupancy {
    pub fn new(part_id: u32, resolution: u32, cells: BTreeSet<Cell>) -> VoxelResult<Self> {
        if resolution < 2 {
            return Err(VoxelError::BadResolution(resolution));
        }
        if let Some(bad) = cells.iter().find(|c| !in_grid(c, resolution)) {
            return Err(VoxelError::OutOfRange { cell: *bad, resolution });
        }
        let bbox = VoxelBox::of(&cells).ok_or(VoxelError::EmptyCells)?;
        Ok(PartOccupancy { part_id, resolution, cells, bbox })
    }

    pub fn from_cells<I: IntoIterator<Item = Cell>>(
        part_id: u32,
        resolution: u32,
        cells: I,
    ) -> VoxelResult<Self> {
        PartOccupancy::new(part_id, resolution, cells.into_iter().collect())
    }

    pub fn part_id(&self) -> u32 {
        self.part_id
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn cells(&self) -> &BTreeSet<Cell> {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn voxel_aabb(&self) -> VoxelBox {
        self.bbox
    }

    pub fn world_aabb(&self) -> Aabb {
        self.bbox.world_aabb(self.resolution)
    }

    pub fn world_center(&self) -> Vec3 {
        self.bbox.world_center(self.resolution)
    }

    pub fn voxel_set(&self) -> VoxelSet {
        VoxelSet { resolution: self.resolution, cells: self.cells.clone() }
    }

    pub fn with_id(mut self, part_id: u32) -> Self {
        self.part_id = part_id;
        self
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        self.cells.contains(cell)
    }

    /// Shifts every cell by a whole-cell vector.
    pub fn shift_cells(&self, d: Cell) -> Translated {
        if d == [0, 0, 0] {
            return Translated { occupancy: Some(self.clone()), clipped: 0 };
        }
        let mut clipped = 0;
        let mut cells = BTreeSet::new();
        for c in &self.cells {
            let moved = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
            if in_grid(&moved, self.resolution) {
                cells.insert(moved);
            } else {
                clipped += 1;
            }
        }
        let occupancy = if clipped == 0 {
            // shifting preserves tightness
            Some(PartOccupancy {
                part_id: self.part_id,
                resolution: self.resolution,
                cells,
                bbox: self.bbox.shifted(d),
            })
        } else {
            PartOccupancy::new(self.part_id, self.resolution, cells).ok()
        };
        Translated { occupancy, clipped }
    }

    /// Moves the part by a world-space offset, quantized per axis to the
    /// nearest whole cell.
    pub fn translate_cells(&self, offset: &Vec3) -> Translated {
        self.shift_cells(quantize_offset(offset, self.resolution))
    }

    /// True when the two parts share at least one cell.
    pub fn collides(&self, other: &PartOccupancy) -> bool {
        if !self.bbox.intersects(&other.bbox) {
            return false;
        }
        let (small, large) =
            if self.len() <= other.len() { (self, other) } else { (other, self) };
        small.cells.iter().any(|c| large.cells.contains(c))
    }
}

/// Exact intersection of two occupancies' cell sets.
pub fn overlap(a: &PartOccupancy, b: &PartOccupancy) -> VoxelResult<BTreeSet<Cell>> {
    if a.resolution != b.resolution {
        return Err(VoxelError::ResolutionMismatch(a.resolution, b.resolution));
    }
    if !a.bbox.intersects(&b.bbox) {
        return Ok(BTreeSet::new());
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    Ok(small.cells.iter().filter(|c| large.cells.contains(*c)).copied().collect())
}

/// Several parts on one grid, stored as `(ix, iy, iz, part_id)` entries.
/// `overlapping` is set when some cell carries more than one part id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseVoxelGrid {
    resolution: u32,
    entries: BTreeSet<(i32, i32, i32, u32)>,
    overlapping: bool,
}

impl SparseVoxelGrid {
    /// Builds a grid from parts with distinct ids. Shared cells are an error
    /// unless `allow_overlap` is set.
    pub fn from_parts(parts: &[PartOccupancy], allow_overlap: bool) -> VoxelResult<Self> {
        let resolution = parts.first().map(|p| p.resolution).unwrap_or(DEFAULT_RESOLUTION);
        let mut owner: BTreeMap<Cell, u32> = BTreeMap::new();
        let mut ids = BTreeSet::new();
        let mut entries = BTreeSet::new();
        let mut overlapping = false;
        for p in parts {
            if p.resolution != resolution {
                return Err(VoxelError::ResolutionMismatch(resolution, p.resolution));
            }
            if !ids.insert(p.part_id) {
                return Err(VoxelError::DuplicatePart(p.part_id));
            }
            for c in &p.cells {
                if let Some(&prev) = owner.get(c) {
                    if !allow_overlap {
                        return Err(VoxelError::UnexpectedOverlap(prev, p.part_id));
                    }
                    overlapping = true;
                } else {
                    owner.insert(*c, p.part_id);
                }
                entries.insert((c[0], c[1], c[2], p.part_id));
            }
        }
        Ok(SparseVoxelGrid { resolution, entries, overlapping })
    }

    pub(crate) fn from_entries(
        resolution: u32,
        entries: BTreeSet<(i32, i32, i32, u32)>,
    ) -> VoxelResult<Self> {
        if resolution < 2 {
            return Err(VoxelError::BadResolution(resolution));
        }
        let mut overlapping = false;
        let mut last: Option<Cell> = None;
        for &(x, y, z, _) in &entries {
            let c = [x, y, z];
            if !in_grid(&c, resolution) {
                return Err(VoxelError::OutOfRange { cell: c, resolution });
            }
            if last == Some(c) {
                overlapping = true;
            }
            last = Some(c);
        }
        Ok(SparseVoxelGrid { resolution, entries, overlapping })
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn entries(&self) -> impl Iterator<Item = &(i32, i32, i32, u32)> {
        self.entries.iter()
    }

    /// Parts in increasing id order.
    pub fn parts(&self) -> Vec<PartOccupancy> {
        let mut by_id: BTreeMap<u32, BTreeSet<Cell>> = BTreeMap::new();
        for &(x, y, z, id) in &self.entries {
            by_id.entry(id).or_default().insert([x, y, z]);
        }
        by_id
            .into_iter()
            .map(|(id, cells)| {
                PartOccupancy::new(id, self.resolution, cells).expect("grid entries are in range")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cube_cells(lo: i32, hi: i32) -> BTreeSet<Cell> {
        let mut s = BTreeSet::new();
        for x in lo..=hi {
            for y in lo..=hi {
                for z in lo..=hi {
                    s.insert([x, y, z]);
                }
            }
        }
        s
    }

    #[test]
    fn overlap_identity_and_disjoint() {
        let a = PartOccupancy::new(0, 16, cube_cells(2, 5)).unwrap();
        assert_eq!(overlap(&a, &a).unwrap(), *a.cells());
        let b = PartOccupancy::new(1, 16, cube_cells(9, 12)).unwrap();
        assert!(overlap(&a, &b).unwrap().is_empty());
        let c = PartOccupancy::new(1, 8, cube_cells(0, 1)).unwrap();
        assert_eq!(overlap(&a, &c), Err(VoxelError::ResolutionMismatch(16, 8)));
    }

    #[test]
    fn overlap_of_shifted_cubes_matches_hash_set_oracle() {
        let a = PartOccupancy::new(0, 16, cube_cells(2, 7)).unwrap();
        let b = a.shift_cells([2, -1, 3]).occupancy.unwrap().with_id(1);
        let ha: HashSet<Cell> = a.cells().iter().copied().collect();
        let hb: HashSet<Cell> = b.cells().iter().copied().collect();
        let oracle: BTreeSet<Cell> = ha.intersection(&hb).copied().collect();
        assert_eq!(overlap(&a, &b).unwrap(), oracle);
        assert_eq!(overlap(&b, &a).unwrap(), oracle);
        assert_eq!(oracle.len(), 4 * 5 * 3);
    }

    #[test]
    fn translate_identity_whole_cell_and_rounding() {
        let a = PartOccupancy::new(0, 16, cube_cells(4, 6)).unwrap();
        let c = cell_size(16);
        assert_eq!(a.translate_cells(&Vec3::zeros()).occupancy.unwrap(), a);

        let expect: BTreeSet<Cell> = a.cells().iter().map(|p| [p[0] + 1, p[1], p[2]]).collect();
        let one = a.translate_cells(&Vec3::new(c, 0.0, 0.0));
        assert_eq!(one.occupancy.unwrap().cells(), &expect);
        // 1.4 cells quantizes to a single cell shift
        let frac = a.translate_cells(&Vec3::new(1.4 * c, 0.0, 0.0));
        assert_eq!(frac.clipped, 0);
        assert_eq!(frac.occupancy.unwrap().cells(), &expect);
    }

    #[test]
    fn translate_clips_and_counts() {
        let a = PartOccupancy::new(0, 8, cube_cells(5, 7)).unwrap();
        let t = a.shift_cells([2, 0, 0]);
        assert_eq!(t.clipped, 18);
        assert_eq!(t.occupancy.unwrap().len(), 9);
        assert!(a.shift_cells([8, 0, 0]).occupancy.is_none());
    }

    #[test]
    fn box_gap_convention() {
        let a = VoxelBox { min: [0, 0, 0], max: [3, 3, 3] };
        let adjacent = VoxelBox { min: [4, 0, 0], max: [5, 3, 3] };
        assert_eq!(a.gap(&adjacent, 0), 0);
        let apart = VoxelBox { min: [6, 0, 0], max: [7, 3, 3] };
        assert_eq!(a.max_gap(&apart), 2);
        assert!(a.max_gap(&a) < 0);
    }

    #[test]
    fn constructor_rejects_bad_cells() {
        assert_eq!(PartOccupancy::new(0, 8, BTreeSet::new()), Err(VoxelError::EmptyCells));
        assert!(matches!(
            PartOccupancy::from_cells(0, 8, [[8, 0, 0]]),
            Err(VoxelError::OutOfRange { .. })
        ));
    }

    #[test]
    fn grid_groups_parts_and_flags_overlap() {
        let a = PartOccupancy::new(3, 8, cube_cells(0, 1)).unwrap();
        let b = PartOccupancy::new(1, 8, cube_cells(1, 2)).unwrap();
        assert_eq!(
            SparseVoxelGrid::from_parts(&[a.clone(), b.clone()], false),
            Err(VoxelError::UnexpectedOverlap(3, 1))
        );
        let g = SparseVoxelGrid::from_parts(&[a.clone(), b.clone()], true).unwrap();
        assert!(g.is_overlapping());
        let parts = g.parts();
        assert_eq!(parts, vec![b, a]);
    }
}
