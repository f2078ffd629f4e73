//! Binary morphology with the cubic (26-neighbour) structuring element of
//! radius `k`, applied separably one axis at a time. Operations work on the
//! unbounded lattice; [`morphological_close`] clips to the grid at the end.

use std::collections::BTreeSet;

use super::{in_grid, Cell, PartOccupancy};

fn dilate_axis(cells: &BTreeSet<Cell>, axis: usize, k: i32) -> BTreeSet<Cell> {
    let mut out = BTreeSet::new();
    for c in cells {
        for t in -k..=k {
            let mut m = *c;
            m[axis] += t;
            out.insert(m);
        }
    }
    out
}

fn erode_axis(cells: &BTreeSet<Cell>, axis: usize, k: i32) -> BTreeSet<Cell> {
    cells
        .iter()
        .filter(|c| {
            (-k..=k).all(|t| {
                let mut m = **c;
                m[axis] += t;
                cells.contains(&m)
            })
        })
        .copied()
        .collect()
}

pub fn dilate(cells: &BTreeSet<Cell>, k: u32) -> BTreeSet<Cell> {
    let k = k as i32;
    (0..3).fold(cells.clone(), |acc, axis| dilate_axis(&acc, axis, k))
}

pub fn erode(cells: &BTreeSet<Cell>, k: u32) -> BTreeSet<Cell> {
    let k = k as i32;
    (0..3).fold(cells.clone(), |acc, axis| erode_axis(&acc, axis, k))
}

/// Dilation then erosion by radius `k`. Extensive: the result always
/// contains the input. `k = 0` is the identity.
pub fn morphological_close(p: &PartOccupancy, k: u32) -> PartOccupancy {
    if k == 0 {
        return p.clone();
    }
    let closed = erode(&dilate(p.cells(), k), k);
    let cells: BTreeSet<Cell> =
        closed.into_iter().filter(|c| in_grid(c, p.resolution())).collect();
    PartOccupancy::new(p.part_id(), p.resolution(), cells).expect("closing keeps the input cells")
}
