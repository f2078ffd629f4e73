//! Static 3-d tree for exact nearest-neighbour distance queries.

use crate::geom::Vec3;

const LEAF: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

pub struct KdTree {
    points: Vec<Vec3>,
    root: Node,
}

fn build(points: &mut [Vec3], offset: usize) -> Node {
    if points.len() <= LEAF {
        return Node::Leaf { start: offset, end: offset + points.len() };
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points.iter() {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z { 0 } else if ext.y >= ext.z { 1 } else { 2 };
    let mid = points.len() / 2;
    points.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
    let value = points[mid][axis];
    let (l, r) = points.split_at_mut(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(l, offset)),
        right: Box::new(build(r, offset + mid)),
    }
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> KdTree {
        let mut points = points.to_vec();
        let root = build(&mut points, 0);
        KdTree { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared distance from `q` to its nearest stored point; infinite when
    /// the tree is empty.
    pub fn nearest_sq(&self, q: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        self.search(&self.root, q, &mut best);
        best
    }

    pub fn nearest(&self, q: &Vec3) -> f64 {
        self.nearest_sq(q).sqrt()
    }

    fn search(&self, node: &Node, q: &Vec3, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for p in &self.points[*start..*end] {
                    let d = (p - q).norm_squared();
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                // left holds coordinates <= value, right holds >= value
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}
