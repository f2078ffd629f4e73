use std::collections::HashMap;

use super::{Part, PartSet, TriMesh};

/// Vertices closer than this (Euclidean, in the mesh's units) are welded
/// when computing connectivity. Meant to be applied to normalized meshes.
pub const WELD_TOLERANCE: f64 = 1e-6;

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Splits a mesh into connected pieces. Two triangles are connected when
/// they share a vertex position (within [`WELD_TOLERANCE`]). Part ids are
/// assigned by decreasing triangle count, ties by first triangle index.
pub fn split_connected_components(mesh: &TriMesh) -> PartSet {
    split_with_tolerance(mesh, WELD_TOLERANCE)
}

pub(crate) fn split_with_tolerance(mesh: &TriMesh, tol: f64) -> PartSet {
    let verts = mesh.vertices();
    let mut dsu = DisjointSet::new(verts.len());

    // bucket vertices on a lattice of pitch `tol`; candidates sit in the 27 neighbours
    let key = |i: usize| -> [i64; 3] {
        let p = verts[i];
        [(p.x / tol).floor() as i64, (p.y / tol).floor() as i64, (p.z / tol).floor() as i64]
    };
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for i in 0..verts.len() {
        buckets.entry(key(i)).or_default().push(i);
    }
    let tol2 = tol * tol;
    for i in 0..verts.len() {
        let k = key(i);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(bucket) = buckets.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for &j in bucket {
                        if j > i && (verts[i] - verts[j]).norm_squared() <= tol2 {
                            dsu.union(i, j);
                        }
                    }
                }
            }
        }
    }
    for t in mesh.triangles() {
        dsu.union(t[0] as usize, t[1] as usize);
        dsu.union(t[1] as usize, t[2] as usize);
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of_root: HashMap<usize, usize> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let root = dsu.find(tri[0] as usize);
        let g = *group_of_root.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(t);
    }
    // groups are in first-triangle order; stable sort keeps that as the tie-break
    groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

    groups
        .iter()
        .enumerate()
        .map(|(id, tris)| Part { id: id as u32, mesh: submesh(mesh, tris) })
        .collect()
}

/// Triangles `tris` of `mesh` with vertices compacted in first-use order.
pub(crate) fn submesh(mesh: &TriMesh, tris: &[usize]) -> TriMesh {
    let mut remap: HashMap<u32, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::with_capacity(tris.len());
    let mut tags = Vec::with_capacity(tris.len());
    for &t in tris {
        let tri = mesh.triangles()[t];
        let mut out = [0u32; 3];
        for (slot, &v) in out.iter_mut().zip(tri.iter()) {
            *slot = *remap.entry(v).or_insert_with(|| {
                vertices.push(mesh.vertices()[v as usize]);
                (vertices.len() - 1) as u32
            });
        }
        triangles.push(out);
        tags.push(mesh.tags()[t]);
    }
    TriMesh::with_tags(vertices, triangles, tags).expect("submesh of a valid mesh is valid")
}
