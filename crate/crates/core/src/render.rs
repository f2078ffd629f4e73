//! Orthographic software rasterizer for six axis-aligned views.
//!
//! Each view projects the `[-1, 1]^2` plane spanned by its `right` and `up`
//! axes onto `W x H` pixels; pixel `(px, py)` samples the plane at
//! `(-1 + (px + 0.5) * 2 / W, 1 - (py + 0.5) * 2 / H)`. Depth is
//! `1 + dot(p, forward)`, so the camera plane sits at depth 0 and smaller is
//! nearer. Coverage follows the top-left rule, and at equal depth the lower
//! triangle index wins.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Luma, Rgba};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::mesh::TriMesh;

pub const DEFAULT_SIZE: u32 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Front,
    Back,
    Left,
    Right,
    Top,
    Bottom,
}

impl View {
    pub const ALL: [View; 6] = [View::Front, View::Back, View::Left, View::Right, View::Top, View::Bottom];

    /// 1-based view index; the front view is 1.
    pub fn index(self) -> usize {
        View::ALL.iter().position(|v| *v == self).expect("listed") + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            View::Front => "front",
            View::Back => "back",
            View::Left => "left",
            View::Right => "right",
            View::Top => "top",
            View::Bottom => "bottom",
        }
    }

    /// Axis the camera sits on, pointing from the origin to the camera.
    pub fn camera_axis(self) -> Vec3 {
        match self {
            View::Front => Vec3::z(),
            View::Back => -Vec3::z(),
            View::Left => -Vec3::x(),
            View::Right => Vec3::x(),
            View::Top => Vec3::y(),
            View::Bottom => -Vec3::y(),
        }
    }

    pub fn forward(self) -> Vec3 {
        -self.camera_axis()
    }

    pub fn up(self) -> Vec3 {
        match self {
            View::Top | View::Bottom => -Vec3::z(),
            _ => Vec3::y(),
        }
    }

    pub fn right(self) -> Vec3 {
        self.forward().cross(&self.up())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewSpec {
    pub view: View,
    pub width: u32,
    pub height: u32,
}

impl ViewSpec {
    pub fn new(view: View, width: u32, height: u32) -> ViewSpec {
        ViewSpec { view, width, height }
    }

    /// Plane coordinates of a pixel centre.
    pub fn pixel_center(&self, px: u32, py: u32) -> (f64, f64) {
        (
            -1.0 + (px as f64 + 0.5) * 2.0 / self.width as f64,
            1.0 - (py as f64 + 0.5) * 2.0 / self.height as f64,
        )
    }

    /// Continuous pixel coordinates of a world point (pixel centres sit at
    /// half-integers).
    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        let s = p.dot(&self.view.right());
        let t = p.dot(&self.view.up());
        ((s + 1.0) * 0.5 * self.width as f64, (1.0 - t) * 0.5 * self.height as f64)
    }
}

/// Per-pixel render output, row-major from the top-left pixel. Background
/// pixels carry zero colour, infinite depth and no triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub spec: ViewSpec,
    pub normal: Vec<[f64; 3]>,
    pub ccm: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub mask: Vec<bool>,
    pub triangle: Vec<Option<u32>>,
}

impl GBuffer {
    fn background(spec: ViewSpec) -> GBuffer {
        let n = (spec.width * spec.height) as usize;
        GBuffer {
            spec,
            normal: vec![[0.0; 3]; n],
            ccm: vec![[0.0; 3]; n],
            depth: vec![f64::INFINITY; n],
            mask: vec![false; n],
            triangle: vec![None; n],
        }
    }

    pub fn index(&self, px: u32, py: u32) -> usize {
        (py * self.spec.width + px) as usize
    }

    pub fn hit_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn normal_png(&self, sixteen_bit: bool) -> Vec<u8> {
        rgba_png(self, &self.normal, sixteen_bit)
    }

    pub fn ccm_png(&self, sixteen_bit: bool) -> Vec<u8> {
        rgba_png(self, &self.ccm, sixteen_bit)
    }

    pub fn mask_png(&self) -> Vec<u8> {
        let img = ImageBuffer::from_fn(self.spec.width, self.spec.height, |x, y| {
            Luma([if self.mask[self.index(x, y)] { 255u8 } else { 0 }])
        });
        encode(img)
    }
}

fn encode<P, C>(img: ImageBuffer<P, C>) -> Vec<u8>
where
    P: image::Pixel + image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

fn rgba_png(buf: &GBuffer, rgb: &[[f64; 3]], sixteen_bit: bool) -> Vec<u8> {
    let (w, h) = (buf.spec.width, buf.spec.height);
    if sixteen_bit {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        encode(ImageBuffer::from_fn(w, h, |x, y| {
            let i = buf.index(x, y);
            let c = rgb[i];
            Rgba([q(c[0]), q(c[1]), q(c[2]), if buf.mask[i] { u16::MAX } else { 0 }])
        }))
    } else {
        let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        encode(ImageBuffer::from_fn(w, h, |x, y| {
            let i = buf.index(x, y);
            let c = rgb[i];
            Rgba([q(c[0]), q(c[1]), q(c[2]), if buf.mask[i] { u8::MAX } else { 0 }])
        }))
    }
}

/// `(v + 1) / 2` per component.
pub fn encode_unit(v: &Vec3) -> [f64; 3] {
    [(v.x + 1.0) * 0.5, (v.y + 1.0) * 0.5, (v.z + 1.0) * 0.5]
}

pub fn decode_unit(c: [f64; 3]) -> Vec3 {
    Vec3::new(c[0] * 2.0 - 1.0, c[1] * 2.0 - 1.0, c[2] * 2.0 - 1.0)
}

fn is_top_left(dx: f64, dy: f64) -> bool {
    // counter-clockwise in (s, t) with t up: left edges run down, top edges run left
    dy < 0.0 || (dy == 0.0 && dx < 0.0)
}

pub fn render_view(mesh: &TriMesh, spec: ViewSpec) -> GBuffer {
    let mut buf = GBuffer::background(spec);
    let (right, up, fwd) = (spec.view.right(), spec.view.up(), spec.view.forward());
    let (w, h) = (spec.width as f64, spec.height as f64);

    for t in 0..mesh.triangle_count() {
        let tri = mesh.triangle(t);
        let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let normal = encode_unit(&(n / len));
        let mut p: Vec<(f64, f64)> = tri.iter().map(|v| (v.dot(&right), v.dot(&up))).collect();
        let mut verts = tri;
        let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
        if area == 0.0 {
            continue;
        }
        if area < 0.0 {
            p.swap(1, 2);
            verts.swap(1, 2);
        }
        let area = area.abs();

        let smin = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min);
        let smax = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
        let tmin = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min);
        let tmax = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max);
        let px0 = (((smin + 1.0) * 0.5 * w - 0.5).floor().max(0.0)) as u32;
        let px1 = (((smax + 1.0) * 0.5 * w - 0.5).ceil().min(w - 1.0)).max(-1.0);
        let py0 = (((1.0 - tmax) * 0.5 * h - 0.5).floor().max(0.0)) as u32;
        let py1 = (((1.0 - tmin) * 0.5 * h - 0.5).ceil().min(h - 1.0)).max(-1.0);
        if px1 < 0.0 || py1 < 0.0 {
            continue;
        }
        let (px1, py1) = (px1 as u32, py1 as u32);

        let edges = [(1usize, 2usize), (2, 0), (0, 1)];
        for py in py0..=py1 {
            for px in px0..=px1 {
                let (s, tt) = spec.pixel_center(px, py);
                let mut lam = [0.0; 3];
                let mut inside = true;
                for (i, &(a, b)) in edges.iter().enumerate() {
                    let (dx, dy) = (p[b].0 - p[a].0, p[b].1 - p[a].1);
                    let e = dx * (tt - p[a].1) - dy * (s - p[a].0);
                    if e < 0.0 || (e == 0.0 && !is_top_left(dx, dy)) {
                        inside = false;
                        break;
                    }
                    lam[i] = e / area;
                }
                if !inside {
                    continue;
                }
                let hit = verts[0] * lam[0] + verts[1] * lam[1] + verts[2] * lam[2];
                let depth = 1.0 + hit.dot(&fwd);
                let i = buf.index(px, py);
                if depth < buf.depth[i] {
                    buf.depth[i] = depth;
                    buf.mask[i] = true;
                    buf.normal[i] = normal;
                    buf.ccm[i] = encode_unit(&hit);
                    buf.triangle[i] = Some(t as u32);
                }
            }
        }
    }
    buf
}

/// Views in the order front, back, left, right, top, bottom.
pub fn render_six(mesh: &TriMesh, width: u32, height: u32) -> Vec<GBuffer> {
    View::ALL.par_iter().map(|v| render_view(mesh, ViewSpec::new(*v, width, height))).collect()
}

/// Writes `normal_<view>.png`, `ccm_<view>.png` and `mask_<view>.png`.
pub fn write_views(dir: &Path, buffers: &[GBuffer], sixteen_bit: bool) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for b in buffers {
        let name = b.spec.view.name();
        std::fs::write(dir.join(format!("normal_{name}.png")), b.normal_png(sixteen_bit))?;
        std::fs::write(dir.join(format!("ccm_{name}.png")), b.ccm_png(sixteen_bit))?;
        std::fs::write(dir.join(format!("mask_{name}.png")), b.mask_png())?;
    }
    Ok(())
}
