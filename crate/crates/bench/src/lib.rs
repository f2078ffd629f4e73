//! Fixtures shared by the kernel benchmarks.

use eipart_core::mesh::{sample_surface, Part};
use eipart_core::{TriMesh, Vec3};

/// A `n x n x n` lattice of small disjoint cubes inside `[-0.5, 0.5]^3`.
pub fn cube_lattice(n: usize) -> Vec<Part> {
    let pitch = 1.0 / n as f64;
    let size = pitch * 0.6;
    let mut parts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let lo = [-0.5 + i as f64 * pitch, -0.5 + j as f64 * pitch, -0.5 + k as f64 * pitch];
                let mesh = TriMesh::cuboid(lo, [lo[0] + size, lo[1] + size, lo[2] + size]);
                parts.push(Part { id: parts.len() as u32, mesh });
            }
        }
    }
    parts
}

pub fn surface_cloud(mesh: &TriMesh, n: usize, seed: u64) -> Vec<Vec3> {
    sample_surface(mesh, n, seed).expect("non-empty mesh").into_iter().map(|s| s.position).collect()
}
