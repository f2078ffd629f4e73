//! Conservative surface voxelization: a cell is occupied iff its closed box
//! intersects a triangle, decided by the separating-axis test.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{cell_size, Cell, PartOccupancy, VoxelError, VoxelResult};
use crate::geom::Vec3;
use crate::mesh::TriMesh;

/// Closed triangle/box intersection (box given by centre and half extents).
/// Touching counts as intersecting.
pub fn tri_box_overlap(center: &Vec3, half: &Vec3, tri: &[Vec3; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];

    // box face normals
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half[a] || hi < -half[a] {
            return false;
        }
    }

    // triangle plane
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let n = e[0].cross(&e[1]);
    let d = n.dot(&v[0]);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    if d.abs() > r {
        return false;
    }

    // edge x box-axis cross products
    for edge in &e {
        for a in 0..3 {
            let mut axis = Vec3::zeros();
            axis[a] = 1.0;
            let axis = axis.cross(edge);
            let p0 = axis.dot(&v[0]);
            let p1 = axis.dot(&v[1]);
            let p2 = axis.dot(&v[2]);
            let r = half.x * axis.x.abs() + half.y * axis.y.abs() + half.z * axis.z.abs();
            if p0.min(p1).min(p2) > r || p0.max(p1).max(p2) < -r {
                return false;
            }
        }
    }
    true
}

fn cell_range(lo: f64, hi: f64, resolution: u32) -> Option<(i32, i32)> {
    let c = cell_size(resolution);
    // one extra cell each way covers faces lying exactly on cell boundaries
    let a = ((lo + 1.0) / c).floor() as i64 - 1;
    let b = ((hi + 1.0) / c).floor() as i64 + 1;
    let a = a.max(0);
    let b = b.min(resolution as i64 - 1);
    (a <= b).then_some((a as i32, b as i32))
}

fn triangle_cells(tri: &[Vec3; 3], resolution: u32, out: &mut Vec<Cell>) {
    let c = cell_size(resolution);
    let half = Vec3::repeat(c * 0.5);
    let mut ranges = [(0, 0); 3];
    for (a, range) in ranges.iter_mut().enumerate() {
        let lo = tri[0][a].min(tri[1][a]).min(tri[2][a]);
        let hi = tri[0][a].max(tri[1][a]).max(tri[2][a]);
        match cell_range(lo, hi, resolution) {
            Some(r) => *range = r,
            None => return,
        }
    }
    for x in ranges[0].0..=ranges[0].1 {
        for y in ranges[1].0..=ranges[1].1 {
            for z in ranges[2].0..=ranges[2].1 {
                let center = Vec3::new(
                    -1.0 + (x as f64 + 0.5) * c,
                    -1.0 + (y as f64 + 0.5) * c,
                    -1.0 + (z as f64 + 0.5) * c,
                );
                if tri_box_overlap(&center, &half, tri) {
                    out.push([x, y, z]);
                }
            }
        }
    }
}

/// All cells of an `R^3` grid over `[-1, 1]^3` touched by the mesh surface.
pub fn voxelize_cells(mesh: &TriMesh, resolution: u32) -> BTreeSet<Cell> {
    (0..mesh.triangle_count())
        .into_par_iter()
        .fold(Vec::new, |mut acc, t| {
            triangle_cells(&mesh.triangle(t), resolution, &mut acc);
            acc
        })
        .flatten_iter()
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Surface-voxelizes a normalized part mesh.
pub fn voxelize(mesh: &TriMesh, part_id: u32, resolution: u32) -> VoxelResult<PartOccupancy> {
    if resolution < 2 {
        return Err(VoxelError::BadResolution(resolution));
    }
    let cells = voxelize_cells(mesh, resolution);
    if cells.is_empty() {
        return Err(VoxelError::EmptyResult);
    }
    PartOccupancy::new(part_id, resolution, cells)
}
