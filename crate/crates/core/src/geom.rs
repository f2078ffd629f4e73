//! Small geometric value types shared by every stage.

use serde::{Deserialize, Serialize};

pub type Vec3 = nalgebra::Vector3<f64>;

pub(crate) fn to_array(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub(crate) fn from_array(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

/// Axis-aligned bounding box in world units. `min <= max` componentwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    /// Exact componentwise extrema of a point set, `None` when it is empty.
    pub fn from_points<'a, I>(points: I) -> Option<Aabb>
    where
        I: IntoIterator<Item = &'a Vec3>,
    {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in iter {
            bb.expand(p);
        }
        Some(bb)
    }

    pub fn expand(&mut self, p: &Vec3) {
        for i in 0..3 {
            self.min[i] = self.min[i].min(p[i]);
            self.max[i] = self.max[i].max(p[i]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        out.expand(&other.min);
        out.expand(&other.max);
        out
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        let m = Vec3::repeat(margin);
        Aabb { min: self.min - m, max: self.max + m }
    }

    /// Closed-box overlap: touching faces count.
    pub fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }
}

/// Uniform scale followed by a translation: `p' = scale * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub translation: [f64; 3],
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity { scale: 1.0, translation: [0.0; 3] };

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        p * self.scale + from_array(self.translation)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Similarity) -> Similarity {
        let t = self.apply(&from_array(first.translation));
        Similarity { scale: self.scale * first.scale, translation: to_array(&t) }
    }

    pub fn inverse(&self) -> Similarity {
        let inv = 1.0 / self.scale;
        let t = -from_array(self.translation) * inv;
        Similarity { scale: inv, translation: to_array(&t) }
    }

    /// The transform mapping `bb` onto `[-1, 1]` along its longest axis,
    /// centred at the origin. `None` for a zero-extent box.
    pub fn normalizing(bb: &Aabb) -> Option<Similarity> {
        let longest = bb.extent().max();
        if !(longest > 0.0) || !longest.is_finite() {
            return None;
        }
        let scale = 2.0 / longest;
        let t = -bb.center() * scale;
        Some(Similarity { scale, translation: to_array(&t) })
    }
}
