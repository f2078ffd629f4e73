//! Wavefront OBJ: positions and faces only. `o`/`g` statements start a new
//! source tag; polygons are fan-triangulated.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{MeshError, MeshResult, TriMesh};
use crate::geom::Vec3;

pub fn parse_obj(text: &str) -> MeshResult<TriMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut tags: Vec<u32> = Vec::new();
    let mut groups: HashMap<String, u32> = HashMap::new();
    let mut current_tag = 0u32;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(keyword) = tokens.next() else { continue };
        let err = |msg: String| MeshError::Parse(format!("line {}: {}", lineno + 1, msg));
        match keyword {
            "v" => {
                let mut xyz = [0.0f64; 3];
                for slot in &mut xyz {
                    let tok = tokens.next().ok_or_else(|| err("vertex needs 3 coordinates".into()))?;
                    *slot = tok.parse().map_err(|_| err(format!("bad coordinate `{tok}`")))?;
                }
                if xyz.iter().any(|c| !c.is_finite()) {
                    return Err(err("non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            "f" => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let index_tok = tok.split('/').next().unwrap_or("");
                    let raw_index: i64 =
                        index_tok.parse().map_err(|_| err(format!("bad face index `{tok}`")))?;
                    // OBJ indices are 1-based; negative values count back from the end.
                    let index = if raw_index > 0 {
                        raw_index - 1
                    } else if raw_index < 0 {
                        vertices.len() as i64 + raw_index
                    } else {
                        return Err(err("face index 0 is invalid".into()));
                    };
                    if index < 0 || index as usize >= vertices.len() {
                        return Err(err(format!(
                            "face index {raw_index} out of range ({} vertices defined)",
                            vertices.len()
                        )));
                    }
                    poly.push(index as u32);
                }
                if poly.len() < 3 {
                    return Err(err("face needs at least 3 vertices".into()));
                }
                for i in 1..poly.len() - 1 {
                    let tri = [poly[0], poly[i], poly[i + 1]];
                    if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                        triangles.push(tri);
                        tags.push(current_tag);
                    }
                }
            }
            "o" | "g" => {
                let name = tokens.collect::<Vec<_>>().join(" ");
                let next = groups.len() as u32;
                current_tag = *groups.entry(name).or_insert(next);
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    TriMesh::with_tags(vertices, triangles, tags)
}

/// Writes positions and 1-based faces. Coordinates use the shortest
/// representation that parses back to the same `f64`.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}
