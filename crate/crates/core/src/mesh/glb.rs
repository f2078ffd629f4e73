//! Binary glTF loading. Static triangle geometry only: node transforms are
//! composed down the scene graph and baked into world-space positions; each
//! (node, mesh) instance becomes one source tag.

use gltf::mesh::Mode;
use gltf::Gltf;
use nalgebra::Matrix4;

use super::{MeshError, MeshResult, TriMesh};
use crate::geom::Vec3;

pub fn parse_glb(bytes: &[u8]) -> MeshResult<TriMesh> {
    let gltf = Gltf::from_slice(bytes).map_err(|e| MeshError::Parse(format!("glb: {e}")))?;
    let blob = gltf.blob.as_deref();

    let mut out = Builder::default();
    let roots: Vec<gltf::Node> = match gltf.default_scene().or_else(|| gltf.scenes().next()) {
        Some(scene) => scene.nodes().collect(),
        None => gltf.nodes().collect(),
    };
    for node in roots {
        visit(&node, &Matrix4::identity(), blob, &mut out)?;
    }
    if out.triangles.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    TriMesh::with_tags(out.vertices, out.triangles, out.tags)
}

#[derive(Default)]
struct Builder {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    tags: Vec<u32>,
    next_tag: u32,
}

fn visit(
    node: &gltf::Node,
    parent: &Matrix4<f64>,
    blob: Option<&[u8]>,
    out: &mut Builder,
) -> MeshResult<()> {
    let local = node.transform().matrix();
    let local = Matrix4::from_fn(|r, c| local[c][r] as f64);
    let world = parent * local;

    if let Some(mesh) = node.mesh() {
        let tag = out.next_tag;
        out.next_tag += 1;
        for primitive in mesh.primitives() {
            let reader = primitive.reader(|buffer| match buffer.source() {
                gltf::buffer::Source::Bin => blob,
                gltf::buffer::Source::Uri(_) => None,
            });
            let Some(positions) = reader.read_positions() else { continue };
            let base = out.vertices.len() as u32;
            for p in positions {
                let h = world * nalgebra::Vector4::new(p[0] as f64, p[1] as f64, p[2] as f64, 1.0);
                out.vertices.push(Vec3::new(h.x, h.y, h.z));
            }
            let count = out.vertices.len() as u32 - base;
            let indices: Vec<u32> = match reader.read_indices() {
                Some(ix) => ix.into_u32().collect(),
                None => (0..count).collect(),
            };
            if let Some(&bad) = indices.iter().find(|&&i| i >= count) {
                return Err(MeshError::Parse(format!(
                    "glb: primitive index {bad} out of range ({count} vertices)"
                )));
            }
            for tri in assemble(primitive.mode(), &indices) {
                let tri = [tri[0] + base, tri[1] + base, tri[2] + base];
                if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                    out.triangles.push(tri);
                    out.tags.push(tag);
                }
            }
        }
    }
    for child in node.children() {
        visit(&child, &world, blob, out)?;
    }
    Ok(())
}

fn assemble(mode: Mode, ix: &[u32]) -> Vec<[u32; 3]> {
    match mode {
        Mode::Triangles => ix.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        Mode::TriangleStrip => (2..ix.len())
            .map(|i| {
                if i % 2 == 0 {
                    [ix[i - 2], ix[i - 1], ix[i]]
                } else {
                    [ix[i - 1], ix[i - 2], ix[i]]
                }
            })
            .collect(),
        Mode::TriangleFan => (2..ix.len()).map(|i| [ix[0], ix[i - 1], ix[i]]).collect(),
        // points and lines carry no surface
        _ => Vec::new(),
    }
}

/// One scene node for [`write_glb`]: local geometry plus a translation that
/// the loader must bake into world space.
pub struct GlbNode<'a> {
    pub mesh: &'a TriMesh,
    pub translation: [f64; 3],
}

/// Authors a minimal GLB: one mesh and one node per entry, positions kept in
/// local space and the offset stored as the node transform.
pub fn write_glb(nodes: &[GlbNode]) -> Vec<u8> {
    let mut bin: Vec<u8> = Vec::new();
    let mut buffer_views = Vec::new();
    let mut accessors = Vec::new();
    let mut meshes = Vec::new();
    let mut gnodes = Vec::new();

    for (i, node) in nodes.iter().enumerate() {
        let verts = node.mesh.vertices();
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        let pos_offset = bin.len();
        for v in verts {
            for k in 0..3 {
                let c = v[k] as f32;
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
                bin.extend_from_slice(&c.to_le_bytes());
            }
        }
        let pos_len = bin.len() - pos_offset;
        let idx_offset = bin.len();
        for t in node.mesh.triangles() {
            for &ix in t {
                bin.extend_from_slice(&ix.to_le_bytes());
            }
        }
        let idx_len = bin.len() - idx_offset;

        buffer_views.push(serde_json::json!({"buffer": 0, "byteOffset": pos_offset, "byteLength": pos_len}));
        buffer_views.push(serde_json::json!({"buffer": 0, "byteOffset": idx_offset, "byteLength": idx_len}));
        accessors.push(serde_json::json!({
            "bufferView": 2 * i, "componentType": 5126, "count": verts.len(),
            "type": "VEC3", "min": lo, "max": hi
        }));
        accessors.push(serde_json::json!({
            "bufferView": 2 * i + 1, "componentType": 5125,
            "count": node.mesh.triangle_count() * 3, "type": "SCALAR"
        }));
        meshes.push(serde_json::json!({
            "primitives": [{"attributes": {"POSITION": 2 * i}, "indices": 2 * i + 1, "mode": 4}]
        }));
        gnodes.push(serde_json::json!({"mesh": i, "translation": node.translation}));
    }

    let doc = serde_json::json!({
        "asset": {"version": "2.0"},
        "scene": 0,
        "scenes": [{"nodes": (0..nodes.len()).collect::<Vec<_>>()}],
        "nodes": gnodes,
        "meshes": meshes,
        "accessors": accessors,
        "bufferViews": buffer_views,
        "buffers": [{"byteLength": bin.len()}],
    });
    let mut json = serde_json::to_vec(&doc).expect("json document serializes");
    while !json.len().is_multiple_of(4) {
        json.push(b' ');
    }
    while !bin.len().is_multiple_of(4) {
        bin.push(0);
    }

    let total = 12 + 8 + json.len() + 8 + bin.len();
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(b"glTF");
    out.extend_from_slice(&2u32.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(b"JSON");
    out.extend_from_slice(&json);
    out.extend_from_slice(&(bin.len() as u32).to_le_bytes());
    out.extend_from_slice(b"BIN\0");
    out.extend_from_slice(&bin);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_transforms_are_flattened() {
        let cube = TriMesh::cuboid([-0.5; 3], [0.5; 3]);
        let bytes = write_glb(&[
            GlbNode { mesh: &cube, translation: [0.0; 3] },
            GlbNode { mesh: &cube, translation: [2.0, 0.0, 0.0] },
        ]);
        let m = parse_glb(&bytes).unwrap();
        // two 8-vertex cubes
        assert_eq!(m.vertices().len(), 16);
        assert_eq!(m.triangle_count(), 24);
        assert_eq!(m.source_object_count(), 2);

        let second: Vec<Vec3> = m.vertices()[8..].to_vec();
        let bb = crate::geom::Aabb::from_points(second.iter()).unwrap();
        assert_eq!(bb.center(), Vec3::new(2.0, 0.0, 0.0));
    }

    #[test]
    fn garbage_is_parse_error() {
        assert!(matches!(parse_glb(b"glTF\x02\0\0\0junk"), Err(MeshError::Parse(_))));
    }

    #[test]
    fn strips_and_fans_assemble() {
        assert_eq!(assemble(Mode::TriangleFan, &[0, 1, 2, 3]), vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(assemble(Mode::TriangleStrip, &[0, 1, 2, 3]), vec![[0, 1, 2], [2, 1, 3]]);
        assert!(assemble(Mode::Lines, &[0, 1]).is_empty());
    }
}
