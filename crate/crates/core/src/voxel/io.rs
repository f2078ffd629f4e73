//! `.voxels` text format:
//!
//! ```text
//! eipart-voxels v1 R=64
//! 10 12 30 0
//! 10 12 31 0
//! ```
//!
//! One `ix iy iz part_id` line per entry, sorted lexicographically by the
//! four integers. Blank lines are ignored on read.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{SparseVoxelGrid, VoxelError, VoxelResult};

pub const VOXEL_HEADER: &str = "eipart-voxels v1";

pub fn write_voxels(grid: &SparseVoxelGrid) -> String {
    let mut out = String::with_capacity(16 * grid.len() + 32);
    let _ = writeln!(out, "{VOXEL_HEADER} R={}", grid.resolution());
    for (x, y, z, id) in grid.entries() {
        let _ = writeln!(out, "{x} {y} {z} {id}");
    }
    out
}

pub fn parse_voxels(text: &str) -> VoxelResult<SparseVoxelGrid> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| VoxelError::Format("missing header".into()))?;
    let resolution = header
        .strip_prefix(VOXEL_HEADER)
        .and_then(|rest| rest.trim().strip_prefix("R="))
        .and_then(|r| r.trim().parse::<u32>().ok())
        .ok_or_else(|| VoxelError::Format(format!("bad header `{header}`")))?;

    let mut entries = BTreeSet::new();
    for (n, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = || VoxelError::Format(format!("line {}: `{line}`", n + 2));
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(bad());
        }
        let x: i32 = fields[0].parse().map_err(|_| bad())?;
        let y: i32 = fields[1].parse().map_err(|_| bad())?;
        let z: i32 = fields[2].parse().map_err(|_| bad())?;
        let id: u32 = fields[3].parse().map_err(|_| bad())?;
        if !entries.insert((x, y, z, id)) {
            return Err(VoxelError::Format(format!("line {}: duplicate entry", n + 2)));
        }
    }
    SparseVoxelGrid::from_entries(resolution, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::PartOccupancy;
    use proptest::prelude::*;

    #[test]
    fn exact_text_layout() {
        let a = PartOccupancy::from_cells(1, 4, [[0, 0, 1], [0, 0, 0]]).unwrap();
        let b = PartOccupancy::from_cells(0, 4, [[3, 3, 3]]).unwrap();
        let g = SparseVoxelGrid::from_parts(&[a, b], false).unwrap();
        assert_eq!(write_voxels(&g), "eipart-voxels v1 R=4\n0 0 0 1\n0 0 1 1\n3 3 3 0\n");
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_voxels("").is_err());
        assert!(parse_voxels("eipart-voxels v2 R=4\n").is_err());
        assert!(parse_voxels("eipart-voxels v1 R=4\n0 0 0\n").is_err());
        assert!(matches!(
            parse_voxels("eipart-voxels v1 R=4\n0 0 4 0\n"),
            Err(VoxelError::OutOfRange { .. })
        ));
        assert!(parse_voxels("eipart-voxels v1 R=4\n0 0 0 0\n0 0 0 0\n").is_err());
    }

    proptest! {
        #[test]
        fn text_round_trip(entries in proptest::collection::btree_set((0i32..16, 0i32..16, 0i32..16, 0u32..5), 0..200)) {
            let g = SparseVoxelGrid::from_entries(16, entries).unwrap();
            let text = write_voxels(&g);
            let back = parse_voxels(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(write_voxels(&back), text);
        }
    }
}
