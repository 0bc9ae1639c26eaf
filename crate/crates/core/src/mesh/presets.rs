//! Structured meshes of the unit square and the L-shaped domain.

use super::{BoundaryKind, Mesh};
use crate::error::{HelmError, Result};

/// Labels a boundary edge from its midpoint and outward unit normal.
pub type BoundaryRule = dyn Fn([f64; 2], [f64; 2]) -> Option<(BoundaryKind, usize)> + Send + Sync;

/// Every boundary edge gets `kind` (Robin edges go to patch 0).
pub fn uniform_label(kind: BoundaryKind) -> Box<BoundaryRule> {
    Box::new(move |_, _| Some((kind, 0)))
}

/// Labels by outward normal: `[left, right, bottom, top]`. Robin sides all
/// belong to patch 0.
pub fn square_sides(kinds: [BoundaryKind; 4]) -> Box<BoundaryRule> {
    Box::new(move |_, n| {
        let side = if n[0] < -0.5 {
            0
        } else if n[0] > 0.5 {
            1
        } else if n[1] < -0.5 {
            2
        } else {
            3
        };
        Some((kinds[side], 0))
    })
}

/// L-shape labels: `inner` on the two edges meeting at the reentrant corner
/// (the origin), `outer` elsewhere.
pub fn reentrant_sides(inner: BoundaryKind, outer: BoundaryKind) -> Box<BoundaryRule> {
    Box::new(move |m, _| {
        let on_inner = (m[0].abs() < 1e-12 && m[1] < 0.0) || (m[1].abs() < 1e-12 && m[0] > 0.0);
        Some((if on_inner { inner } else { outer }, 0))
    })
}

fn grid(
    origin: [f64; 2],
    size: f64,
    cells: usize,
    keep: impl Fn(usize, usize) -> bool,
) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let h = size / cells as f64;
    let stride = cells + 1;
    let vertices: Vec<[f64; 2]> = (0..=cells)
        .flat_map(|j| (0..=cells).map(move |i| [i, j]))
        .map(|[i, j]| [origin[0] + i as f64 * h, origin[1] + j as f64 * h])
        .collect();
    let mut triangles = Vec::new();
    for j in 0..cells {
        for i in 0..cells {
            if !keep(i, j) {
                continue;
            }
            let v00 = j * stride + i;
            let (v10, v01, v11) = (v00 + 1, v00 + stride, v00 + stride + 1);
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    (vertices, triangles)
}

fn drop_unused(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> (Vec<[f64; 2]>, Vec<[usize; 3]>) {
    let mut map = vec![usize::MAX; vertices.len()];
    let mut kept = Vec::new();
    let mut tris = triangles;
    for t in tris.iter_mut() {
        for v in t.iter_mut() {
            if map[*v] == usize::MAX {
                map[*v] = kept.len();
                kept.push(vertices[*v]);
            }
            *v = map[*v];
        }
    }
    (kept, tris)
}

/// `(0,1)^2` split into `n x n` cells, two triangles each.
pub fn unit_square(n: usize, rule: &BoundaryRule) -> Result<Mesh> {
    if n == 0 {
        return Err(HelmError::Input("unit square needs n >= 1".into()));
    }
    let (v, t) = grid([0.0, 0.0], 1.0, n, |_, _| true);
    let regions = vec![0; t.len()];
    Mesh::build_with_rule(v, t, regions, rule)
}

/// `(-1,1)^2` minus `[0,1) x (-1,0]`, with `n` cells per unit length. The
/// reentrant corner sits at the origin.
pub fn l_shape(n: usize, rule: &BoundaryRule) -> Result<Mesh> {
    if n == 0 {
        return Err(HelmError::Input("L-shape needs n >= 1".into()));
    }
    let (v, t) = grid([-1.0, -1.0], 2.0, 2 * n, |i, j| !(i >= n && j < n));
    let (v, t) = drop_unused(v, t);
    let regions = vec![0; t.len()];
    Mesh::build_with_rule(v, t, regions, rule)
}
