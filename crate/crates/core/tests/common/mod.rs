//! Brute-force oracles and fixture builders shared by the integration tests.
//! Every oracle here is written independently of the library kernels.

#![allow(dead_code)]

use std::collections::BTreeSet;

use eipart_core::mesh::Part;
use eipart_core::render::ViewSpec;
use eipart_core::voxel::{Cell, PartOccupancy};
use eipart_core::{TriMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

pub fn brute_nn(p: &Vec3, cloud: &[Vec3]) -> f64 {
    cloud.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt()
}

pub fn brute_chamfer_mean(a: &[Vec3], b: &[Vec3]) -> f64 {
    let ab: f64 = a.iter().map(|p| brute_nn(p, b)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|p| brute_nn(p, a)).sum::<f64>() / b.len() as f64;
    (ab + ba) / 2.0
}

pub fn brute_f_score(a: &[Vec3], b: &[Vec3], r: f64) -> f64 {
    let precision = a.iter().filter(|p| brute_nn(p, b) < r).count() as f64 / a.len() as f64;
    let recall = b.iter().filter(|p| brute_nn(p, a) < r).count() as f64 / b.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn set_iou(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>) -> f64 {
    let union: BTreeSet<&Cell> = a.iter().chain(b.iter()).collect();
    if union.is_empty() {
        return 1.0;
    }
    let inter = a.iter().filter(|c| b.contains(*c)).count();
    inter as f64 / union.len() as f64
}

pub fn random_cells(rng: &mut ChaCha8Rng, resolution: u32, n: usize) -> BTreeSet<Cell> {
    let r = resolution as i32;
    (0..n).map(|_| [rng.random_range(0..r), rng.random_range(0..r), rng.random_range(0..r)]).collect()
}

fn project(points: &[Vec3], axis: &Vec3) -> (f64, f64) {
    points.iter().map(|p| p.dot(axis)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// Closed box/triangle intersection by projecting the eight box corners and
/// the three triangle vertices onto all thirteen candidate separating axes.
pub fn box_meets_triangle(lo: &Vec3, hi: &Vec3, tri: &[Vec3; 3]) -> bool {
    let corners: Vec<Vec3> = (0..8)
        .map(|m| {
            Vec3::new(
                if m & 1 == 0 { lo.x } else { hi.x },
                if m & 2 == 0 { lo.y } else { hi.y },
                if m & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let edges = [tri[1] - tri[0], tri[2] - tri[1], tri[0] - tri[2]];
    let mut axes = vec![Vec3::x(), Vec3::y(), Vec3::z(), edges[0].cross(&edges[1])];
    for e in &edges {
        for b in [Vec3::x(), Vec3::y(), Vec3::z()] {
            axes.push(b.cross(e));
        }
    }
    axes.iter().all(|axis| {
        let (blo, bhi) = project(&corners, axis);
        let (tlo, thi) = project(tri, axis);
        !(tlo > bhi || thi < blo)
    })
}

/// Every grid cell whose closed box meets some triangle.
pub fn voxel_oracle(mesh: &TriMesh, resolution: u32) -> BTreeSet<Cell> {
    let c = 2.0 / resolution as f64;
    let r = resolution as i32;
    let mut out = BTreeSet::new();
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                let lo = Vec3::new(-1.0 + x as f64 * c, -1.0 + y as f64 * c, -1.0 + z as f64 * c);
                let hi = lo + Vec3::repeat(c);
                if (0..mesh.triangle_count()).any(|t| box_meets_triangle(&lo, &hi, &mesh.triangle(t))) {
                    out.insert([x, y, z]);
                }
            }
        }
    }
    out
}

/// Möller–Trumbore ray/triangle intersection, two-sided. Returns the ray
/// parameter and the smallest barycentric coordinate of the hit.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3]) -> Option<(f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    let w = 1.0 - u - v;
    if u < 0.0 || v < 0.0 || w < 0.0 {
        return None;
    }
    Some((e2.dot(&q) * inv, u.min(v).min(w)))
}

pub struct RayHit {
    pub depth: f64,
    /// Triangles whose hit depth ties the nearest within 1e-9.
    pub nearest: Vec<u32>,
    /// Smallest barycentric coordinate among the nearest hits; values near
    /// zero mean the ray grazes an edge.
    pub edge_margin: f64,
}

/// Casts one ray per pixel centre from the camera plane along the view.
pub fn ray_cast(mesh: &TriMesh, spec: ViewSpec) -> Vec<Option<RayHit>> {
    let (right, up, fwd) = (spec.view.right(), spec.view.up(), spec.view.forward());
    let mut out = Vec::new();
    for py in 0..spec.height {
        for px in 0..spec.width {
            let (s, t) = spec.pixel_center(px, py);
            let origin = right * s + up * t - fwd;
            let hits: Vec<(f64, f64, u32)> = (0..mesh.triangle_count())
                .filter_map(|k| ray_triangle(&origin, &fwd, &mesh.triangle(k)).map(|(d, m)| (d, m, k as u32)))
                .collect();
            let Some(depth) = hits.iter().map(|h| h.0).reduce(f64::min) else {
                out.push(None);
                continue;
            };
            let near: Vec<&(f64, f64, u32)> = hits.iter().filter(|h| h.0 - depth < 1e-9).collect();
            out.push(Some(RayHit {
                depth,
                nearest: near.iter().map(|h| h.2).collect(),
                edge_margin: near.iter().map(|h| h.1).fold(f64::INFINITY, f64::min),
            }));
        }
    }
    out
}

pub fn random_triangle_mesh(rng: &mut ChaCha8Rng, triangles: usize, extent: f64) -> TriMesh {
    let mut verts = Vec::new();
    let mut tris = Vec::new();
    for t in 0..triangles {
        let c = Vec3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
        for _ in 0..3 {
            let d = Vec3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            );
            verts.push(c + d);
        }
        let b = 3 * t as u32;
        tris.push([b, b + 1, b + 2]);
    }
    TriMesh::new(verts, tris).unwrap()
}

/// Axis-aligned box of cells, inclusive bounds.
pub fn block(id: u32, resolution: u32, lo: [i32; 3], hi: [i32; 3]) -> PartOccupancy {
    let mut cells = Vec::new();
    for x in lo[0]..=hi[0] {
        for y in lo[1]..=hi[1] {
            for z in lo[2]..=hi[2] {
                cells.push([x, y, z]);
            }
        }
    }
    PartOccupancy::from_cells(id, resolution, cells).unwrap()
}

/// Up to `k` non-overlapping random blocks near the grid centre.
pub fn random_blocks(rng: &mut ChaCha8Rng, resolution: u32, k: usize) -> Vec<PartOccupancy> {
    let r = resolution as i32;
    let mut parts: Vec<PartOccupancy> = Vec::new();
    let mut tries = 0;
    while parts.len() < k && tries < 1000 {
        tries += 1;
        let size = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let lo = [0, 1, 2].map(|a| rng.random_range(r / 2 - 5..r / 2 + 5 - size[a]));
        let hi = [0, 1, 2].map(|a| lo[a] + size[a] - 1);
        let cand = block(parts.len() as u32, resolution, lo, hi);
        if parts.iter().all(|p| p.cells().is_disjoint(cand.cells())) {
            parts.push(cand);
        }
    }
    parts
}

/// Two unit-height slabs facing each other across the x = 0 plane.
pub fn two_cubes(half_gap: f64) -> TriMesh {
    let a = TriMesh::cuboid([-1.0, -0.45, -0.45], [-half_gap, 0.45, 0.45]);
    let b = TriMesh::cuboid([half_gap, -0.45, -0.45], [1.0, 0.45, 0.45]);
    TriMesh::merge([&a, &b])
}

/// Triangle position triples, each rotated so its smallest vertex comes
/// first (orientation preserved), as a sorted multiset.
pub fn triangle_multiset<'a, I: IntoIterator<Item = &'a TriMesh>>(meshes: I) -> Vec<[[u64; 3]; 3]> {
    let key = |v: &Vec3| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()];
    let mut out = Vec::new();
    for m in meshes {
        for t in 0..m.triangle_count() {
            let tri = m.triangle(t).map(|v| key(&v));
            let start = (0..3).min_by_key(|&i| tri[i]).unwrap();
            out.push([tri[start], tri[(start + 1) % 3], tri[(start + 2) % 3]]);
        }
    }
    out.sort();
    out
}

pub fn part_meshes(parts: &[Part]) -> Vec<&TriMesh> {
    parts.iter().map(|p| &p.mesh).collect()
}
