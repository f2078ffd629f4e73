//! Indexed triangle meshes: loading, normalization, connectivity splitting
//! and area-weighted surface sampling.
//!
//! A [`TriMesh`] carries an optional source tag per triangle (the authored
//! sub-object it came from). Loading flattens GLB scene graphs into world
//! space and drops triangles with repeated vertex indices.

mod glb;
mod obj;
mod sample;
mod split;

use std::path::Path;

use thiserror::Error;

use crate::geom::{Aabb, Similarity, Vec3};

pub use glb::{parse_glb, write_glb, GlbNode};
pub use obj::{parse_obj, write_obj};
pub use sample::{sample_surface, PointSample};
pub use split::{split_connected_components, WELD_TOLERANCE};

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("triangle {triangle} references vertex {index} but the mesh has {len} vertices")]
    InvalidIndex { triangle: usize, index: u32, len: usize },
    #[error("triangle {0} repeats a vertex index")]
    DegenerateTriangle(usize),
    #[error("all vertices coincide; extent is zero")]
    DegenerateExtent,
    #[error("input is empty")]
    EmptyInput,
    #[error("mesh has zero total surface area")]
    ZeroArea,
    #[error("sample count must be at least 1")]
    InvalidCount,
    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type MeshResult<T> = Result<T, MeshError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Glb,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> MeshResult<MeshFormat> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "obj" => Ok(MeshFormat::Obj),
            "glb" => Ok(MeshFormat::Glb),
            other => Err(MeshError::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Indexed triangle mesh. Every index is in range and no triangle repeats
/// a vertex index.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    tags: Vec<u32>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> MeshResult<TriMesh> {
        let tags = vec![0; triangles.len()];
        TriMesh::with_tags(vertices, triangles, tags)
    }

    pub fn with_tags(
        vertices: Vec<Vec3>,
        triangles: Vec<[u32; 3]>,
        tags: Vec<u32>,
    ) -> MeshResult<TriMesh> {
        assert_eq!(triangles.len(), tags.len(), "one tag per triangle");
        for (t, tri) in triangles.iter().enumerate() {
            for &index in tri {
                if index as usize >= vertices.len() {
                    return Err(MeshError::InvalidIndex { triangle: t, index, len: vertices.len() });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::DegenerateTriangle(t));
            }
        }
        Ok(TriMesh { vertices, triangles, tags })
    }

    /// Closed axis-aligned box with outward-facing winding (8 vertices,
    /// 12 triangles).
    pub fn cuboid(min: [f64; 3], max: [f64; 3]) -> TriMesh {
        let v = |x: usize, y: usize, z: usize| {
            Vec3::new(
                if x == 0 { min[0] } else { max[0] },
                if y == 0 { min[1] } else { max[1] },
                if z == 0 { min[2] } else { max[2] },
            )
        };
        let vertices = vec![
            v(0, 0, 0),
            v(1, 0, 0),
            v(1, 1, 0),
            v(0, 1, 0),
            v(0, 0, 1),
            v(1, 0, 1),
            v(1, 1, 1),
            v(0, 1, 1),
        ];
        let tris = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [3, 6, 2],
            [3, 7, 6],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ];
        TriMesh::new(vertices, tris).expect("cuboid topology is valid")
    }

    pub fn empty() -> TriMesh {
        TriMesh { vertices: Vec::new(), triangles: Vec::new(), tags: Vec::new() }
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn tags(&self) -> &[u32] {
        &self.tags
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Number of distinct source tags.
    pub fn source_object_count(&self) -> usize {
        let mut tags = self.tags.clone();
        tags.sort_unstable();
        tags.dedup();
        tags.len()
    }

    /// Exact bounds over the vertices referenced by triangles.
    pub fn aabb(&self) -> MeshResult<Aabb> {
        let mut bb: Option<Aabb> = None;
        for tri in &self.triangles {
            for &i in tri {
                let p = &self.vertices[i as usize];
                match bb.as_mut() {
                    Some(b) => b.expand(p),
                    None => bb = Some(Aabb { min: *p, max: *p }),
                }
            }
        }
        bb.ok_or(MeshError::EmptyInput)
    }

    pub fn transformed(&self, tf: &Similarity) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|p| tf.apply(p)).collect(),
            triangles: self.triangles.clone(),
            tags: self.tags.clone(),
        }
    }

    /// Concatenates meshes, keeping each triangle's tag.
    pub fn merge<'a, I>(meshes: I) -> TriMesh
    where
        I: IntoIterator<Item = &'a TriMesh>,
    {
        let mut out = TriMesh::empty();
        for m in meshes {
            out.append(m);
        }
        out
    }

    pub fn append(&mut self, other: &TriMesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.tags.extend_from_slice(&other.tags);
    }

    pub fn with_uniform_tag(mut self, tag: u32) -> TriMesh {
        self.tags.iter_mut().for_each(|t| *t = tag);
        self
    }

    /// Triangles as position triples; convenient for multiset comparisons.
    pub fn triangle_positions(&self) -> Vec<[[f64; 3]; 3]> {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle(t);
                [[a.x, a.y, a.z], [b.x, b.y, b.z], [c.x, c.y, c.z]]
            })
            .collect()
    }
}

/// Uniformly scales `mesh` about its AABB centre so the longest edge spans
/// exactly `[-1, 1]`. Returns the mesh and the transform that produced it.
pub fn normalize_to_unit_cube(mesh: &TriMesh) -> MeshResult<(TriMesh, Similarity)> {
    let bb = mesh.aabb()?;
    let tf = Similarity::normalizing(&bb).ok_or(MeshError::DegenerateExtent)?;
    let mut out = mesh.transformed(&tf);
    for v in &mut out.vertices {
        for i in 0..3 {
            v[i] = v[i].clamp(-1.0, 1.0);
        }
    }
    Ok((out, tf))
}

pub fn load_mesh(path: &Path) -> MeshResult<TriMesh> {
    let bytes = std::fs::read(path)?;
    match MeshFormat::from_path(path)? {
        MeshFormat::Obj => {
            let text = String::from_utf8(bytes)
                .map_err(|e| MeshError::Parse(format!("OBJ is not UTF-8: {e}")))?;
            parse_obj(&text)
        }
        MeshFormat::Glb => parse_glb(&bytes),
    }
}

/// A part: a mesh with a stable id.
#[derive(Debug, Clone, PartialEq)]
pub struct Part {
    pub id: u32,
    pub mesh: TriMesh,
}

/// Ordered parts of one object.
pub type PartSet = Vec<Part>;

pub fn merge_parts(parts: &[Part]) -> TriMesh {
    TriMesh::merge(parts.iter().map(|p| &p.mesh))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn box_mesh(min: [f64; 3], max: [f64; 3]) -> TriMesh {
        TriMesh::cuboid(min, max)
    }

    #[test]
    fn rejects_invalid_and_degenerate_triangles() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert!(matches!(
            TriMesh::new(v.clone(), vec![[0, 1, 7]]),
            Err(MeshError::InvalidIndex { index: 7, .. })
        ));
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 1]]), Err(MeshError::DegenerateTriangle(0))));
    }

    #[test]
    fn normalize_symmetric_cube() {
        let (out, tf) = normalize_to_unit_cube(&box_mesh([0.0; 3], [2.0; 3])).unwrap();
        assert_eq!(tf.scale, 1.0);
        assert_eq!(tf.translation, [-1.0, -1.0, -1.0]);
        let bb = out.aabb().unwrap();
        assert_eq!(bb.min, Vec3::repeat(-1.0));
        assert_eq!(bb.max, Vec3::repeat(1.0));
    }

    #[test]
    fn normalize_is_identity_on_unit_cube() {
        let m = box_mesh([-1.0; 3], [1.0; 3]);
        let (out, tf) = normalize_to_unit_cube(&m).unwrap();
        assert_eq!(tf, Similarity::IDENTITY);
        assert_eq!(out, m);
    }

    #[test]
    fn normalize_anisotropic_box() {
        let (out, tf) = normalize_to_unit_cube(&box_mesh([0.0; 3], [4.0, 2.0, 1.0])).unwrap();
        assert_eq!(tf.scale, 0.5);
        let bb = out.aabb().unwrap();
        assert_eq!(bb.min, Vec3::new(-1.0, -0.5, -0.25));
        assert_eq!(bb.max, Vec3::new(1.0, 0.5, 0.25));
    }

    #[test]
    fn normalize_rejects_collapsed_mesh() {
        let p = Vec3::new(0.3, 0.3, 0.3);
        // distinct indices, coincident positions
        let m = TriMesh::new(vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(normalize_to_unit_cube(&m), Err(MeshError::DegenerateExtent)));
    }

    #[test]
    fn aabb_of_unit_cube_and_point() {
        let bb = box_mesh([-0.5; 3], [0.5; 3]).aabb().unwrap();
        assert_eq!(bb.min, Vec3::repeat(-0.5));
        assert_eq!(bb.max, Vec3::repeat(0.5));
        let p = Vec3::new(0.1, -0.2, 0.3);
        let single = Aabb::from_points([p].iter()).unwrap();
        assert_eq!((single.min, single.max), (p, p));
        assert!(TriMesh::empty().aabb().is_err());
    }

    #[test]
    fn aabb_matches_brute_force_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec3> =
            (0..8).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let bb = Aabb::from_points(pts.iter()).unwrap();
        for axis in 0..3 {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in &pts {
                if p[axis] < lo {
                    lo = p[axis];
                }
                if p[axis] > hi {
                    hi = p[axis];
                }
            }
            assert_eq!(bb.min[axis], lo);
            assert_eq!(bb.max[axis], hi);
        }
    }
}

