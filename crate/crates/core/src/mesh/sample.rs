//! Area-weighted surface sampling.
//!
//! The random stream is ChaCha8 seeded with `seed_from_u64(seed)`. For each
//! sample the stream yields, in order: one draw for the triangle (inverse
//! CDF over triangle areas, via `WeightedIndex`), then two uniform draws
//! `r1, r2` mapped to barycentrics `(1 - sqrt r1, sqrt r1 (1 - r2), sqrt r1 r2)`.
//! The output is a pure function of (mesh, n, seed).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MeshError, MeshResult, TriMesh};
use crate::geom::Vec3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSample {
    pub position: Vec3,
    pub triangle: u32,
    /// Source tag of the sampled triangle.
    pub part: u32,
    pub barycentric: [f64; 3],
}

pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> MeshResult<Vec<PointSample>> {
    if n == 0 {
        return Err(MeshError::InvalidCount);
    }
    if mesh.is_empty() {
        return Err(MeshError::ZeroArea);
    }
    let areas: Vec<f64> = (0..mesh.triangle_count()).map(|t| mesh.triangle_area(t)).collect();
    let chooser = WeightedIndex::new(&areas).map_err(|_| MeshError::ZeroArea)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let t = chooser.sample(&mut rng);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let bary = [1.0 - s, s * (1.0 - r2), s * r2];
        let [a, b, c] = mesh.triangle(t);
        out.push(PointSample {
            position: a * bary[0] + b * bary[1] + c * bary[2],
            triangle: t as u32,
            part: mesh.tags()[t],
            barycentric: bary,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles(area_a: f64, area_b: f64) -> TriMesh {
        // right triangles with legs (1, 2*area)
        let v = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 2.0 * area_a, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 1.0),
            Vec3::new(0.0, 2.0 * area_b, 1.0),
        ];
        TriMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap()
    }

    #[test]
    fn larger_triangle_gets_three_quarters() {
        // Binomial(1e5, 0.75): mean 75000, sigma ~136.9; +-3 sigma ~ [74589, 75411],
        // the accepted band [73500, 76500] is wider still.
        let m = two_triangles(1.0, 3.0);
        for seed in [0, 1, 7, 12345] {
            let s = sample_surface(&m, 100_000, seed).unwrap();
            let on_large = s.iter().filter(|p| p.triangle == 1).count();
            assert!((73_500..=76_500).contains(&on_large), "seed {seed}: {on_large}");
        }
    }

    #[test]
    fn single_sample_lies_inside_triangle() {
        let m = two_triangles(0.5, 0.5);
        let m = TriMesh::new(m.vertices()[..3].to_vec(), vec![[0, 1, 2]]).unwrap();
        let s = sample_surface(&m, 1, 99).unwrap();
        assert_eq!(s.len(), 1);
        let b = s[0].barycentric;
        assert!(b.iter().all(|&w| (0.0..=1.0).contains(&w)));
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let m = TriMesh::cuboid([-1.0; 3], [1.0; 3]);
        let a = sample_surface(&m, 1000, 5).unwrap();
        let b = sample_surface(&m, 1000, 5).unwrap();
        assert_eq!(a, b);
        let c = sample_surface(&m, 1000, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn positions_reconstruct_from_barycentrics() {
        let m = TriMesh::cuboid([-0.3, -1.0, 0.0], [0.9, 0.4, 0.5]);
        for s in sample_surface(&m, 500, 3).unwrap() {
            let [a, b, c] = m.triangle(s.triangle as usize);
            let p = a * s.barycentric[0] + b * s.barycentric[1] + c * s.barycentric[2];
            assert!((p - s.position).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_area_and_zero_count_rejected() {
        let p = Vec3::new(0.1, 0.2, 0.3);
        let flat = TriMesh::new(vec![p, p, p], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(sample_surface(&flat, 10, 0), Err(MeshError::ZeroArea)));
        assert!(matches!(
            sample_surface(&TriMesh::cuboid([0.0; 3], [1.0; 3]), 0, 0),
            Err(MeshError::InvalidCount)
        ));
    }

    #[test]
    fn frequencies_pass_chi_square() {
        // five triangles with areas 1..5 (fractions k/15), n = 1e5, df = 4.
        // chi-square critical value at p = 0.001 with df = 4 is 18.467.
        let mut verts = Vec::new();
        let mut tris = Vec::new();
        for k in 1..=5u32 {
            let z = k as f64;
            let base = verts.len() as u32;
            verts.push(Vec3::new(0.0, 0.0, z));
            verts.push(Vec3::new(1.0, 0.0, z));
            verts.push(Vec3::new(0.0, 2.0 * k as f64, z));
            tris.push([base, base + 1, base + 2]);
        }
        let m = TriMesh::new(verts, tris).unwrap();
        let n = 100_000usize;
        for seed in [1u64, 2, 3, 4] {
            let mut counts = [0usize; 5];
            for s in sample_surface(&m, n, seed).unwrap() {
                counts[s.triangle as usize] += 1;
            }
            let chi2: f64 = counts
                .iter()
                .enumerate()
                .map(|(k, &c)| {
                    let expected = n as f64 * (k + 1) as f64 / 15.0;
                    (c as f64 - expected).powi(2) / expected
                })
                .sum();
            assert!(chi2 < 18.467, "seed {seed}: chi2 = {chi2}");
        }
    }
}
