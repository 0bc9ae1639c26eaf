//! Quadrature point sets covering the elements and Robin faces of a working
//! mesh, possibly gathered from a finer descendant mesh or graded toward a
//! singular point. Targets of projections and error norms are evaluated on
//! these points.

use crate::basis::dim;
use crate::error::{HelmError, Result};
use crate::mesh::{BoundaryKind, FaceKind, Mesh};
use crate::quadrature::{edge_rule, triangle_rule};
use crate::C64;

/// Volume point: `element` of the working mesh, `source` element of the mesh
/// the point set was built on (the same mesh unless gathered from a finer one).
#[derive(Debug, Clone, Copy)]
pub struct QPoint {
    pub element: usize,
    pub source: usize,
    pub x: [f64; 2],
    pub w: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FacePoint {
    /// Robin face and its owner on the working mesh.
    pub face: usize,
    pub element: usize,
    pub source: usize,
    pub x: [f64; 2],
    pub w: f64,
    pub normal: [f64; 2],
}

#[derive(Debug, Clone, Default)]
pub struct QPoints {
    pub vol: Vec<QPoint>,
    pub robin: Vec<FacePoint>,
}

/// Singular point toward which element quadrature is graded.
#[derive(Debug, Clone, Copy)]
pub struct Grading {
    pub point: [f64; 2],
    pub levels: usize,
}

fn near(a: [f64; 2], b: [f64; 2]) -> bool {
    (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-12
}

fn push_triangle(out: &mut Vec<QPoint>, element: usize, source: usize, v: [[f64; 2]; 3], rule: &crate::quadrature::QuadratureRule) {
    let jac = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    for (xi, w) in rule.iter() {
        let x = [
            v[0][0] + xi[0] * (v[1][0] - v[0][0]) + xi[1] * (v[2][0] - v[0][0]),
            v[0][1] + xi[0] * (v[1][1] - v[0][1]) + xi[1] * (v[2][1] - v[0][1]),
        ];
        out.push(QPoint { element, source, x, w: w * jac });
    }
}

/// Red refinement toward `point`, which must be a vertex of `v`.
fn graded(out: &mut Vec<QPoint>, element: usize, source: usize, v: [[f64; 2]; 3], g: Grading, rule: &crate::quadrature::QuadratureRule) {
    let Some(c) = (0..3).find(|&i| near(v[i], g.point)) else {
        push_triangle(out, element, source, v, rule);
        return;
    };
    if g.levels == 0 {
        push_triangle(out, element, source, v, rule);
        return;
    }
    let m = |a: [f64; 2], b: [f64; 2]| [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    let (a, b) = (v[(c + 1) % 3], v[(c + 2) % 3]);
    let (ma, mb, mab) = (m(v[c], a), m(v[c], b), m(a, b));
    push_triangle(out, element, source, [ma, a, mab], rule);
    push_triangle(out, element, source, [mb, mab, b], rule);
    push_triangle(out, element, source, [ma, mab, mb], rule);
    graded(out, element, source, [v[c], ma, mb], Grading { levels: g.levels - 1, ..g }, rule);
}

fn robin_points(mesh: &Mesh, order: usize) -> Result<Vec<FacePoint>> {
    let rule = edge_rule(order)?;
    let mut out = Vec::new();
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.kind != FaceKind::Boundary(BoundaryKind::Robin) {
            continue;
        }
        for (t, w) in rule.iter() {
            out.push(FacePoint {
                face: f,
                element: face.plus(),
                source: face.plus(),
                x: mesh.face_point(f, t[0]),
                w: w * face.length,
                normal: face.normal,
            });
        }
    }
    Ok(out)
}

impl QPoints {
    pub fn on_mesh(mesh: &Mesh, order: usize, grading: Option<Grading>) -> Result<Self> {
        let rule = triangle_rule(order)?;
        let mut vol = Vec::new();
        for k in 0..mesh.n_triangles() {
            match grading {
                Some(g) => graded(&mut vol, k, k, mesh.corners(k), g, &rule),
                None => push_triangle(&mut vol, k, k, mesh.corners(k), &rule),
            }
        }
        Ok(Self { vol, robin: robin_points(mesh, order)? })
    }

    /// Points of `fine` attributed to the working-mesh elements given by `ancestor`.
    pub fn from_fine(coarse: &Mesh, fine: &Mesh, ancestor: &[usize], order: usize) -> Result<Self> {
        let base = Self::on_mesh(fine, order, None)?;
        let vol = base
            .vol
            .into_iter()
            .map(|q| QPoint { element: ancestor[q.source], ..q })
            .collect();
        let mut robin = Vec::with_capacity(base.robin.len());
        for fp in base.robin {
            let k = ancestor[fp.source];
            let face = coarse
                .triangle_faces(k)
                .into_iter()
                .find(|&f| {
                    let cf = coarse.face(f);
                    cf.kind == FaceKind::Boundary(BoundaryKind::Robin) && on_segment(coarse, f, fp.x)
                })
                .ok_or_else(|| HelmError::Structural("fine Robin face has no coarse parent face".into()))?;
            robin.push(FacePoint { face, element: k, ..fp });
        }
        Ok(Self { vol, robin })
    }
}

pub(crate) fn on_segment(mesh: &Mesh, f: usize, x: [f64; 2]) -> bool {
    let face = mesh.face(f);
    let a = mesh.vertices()[face.vertices[0]];
    let b = mesh.vertices()[face.vertices[1]];
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let cross = (x[0] - a[0]) * dy - (x[1] - a[1]) * dx;
    let t = ((x[0] - a[0]) * dx + (x[1] - a[1]) * dy) / (dx * dx + dy * dy);
    cross.abs() <= 1e-10 * face.length * face.length && (-1e-10..=1.0 + 1e-10).contains(&t)
}

/// Working-mesh ancestor of every element of a descendant mesh obtained by
/// the given chain of refinements (`chain[0]` refines the working mesh).
pub fn ancestors(chain: &[&Mesh]) -> Vec<usize> {
    let Some(last) = chain.last() else {
        return Vec::new();
    };
    (0..last.n_triangles())
        .map(|mut k| {
            for m in chain.iter().rev() {
                k = m.parent(k).expect("refined mesh records parents");
            }
            k
        })
        .collect()
}

/// Value and physical gradient of a broken scalar field at a physical point of element `k`.
pub fn eval_scalar(
    mesh: &Mesh,
    basis: &crate::basis::ModalBasis,
    p: usize,
    coeffs: &[C64],
    k: usize,
    x: [f64; 2],
) -> (C64, [C64; 2]) {
    let n = dim(p);
    let map = mesh.element_map(k);
    let xi = map.to_reference(x);
    let mut v = vec![0.0; basis.len()];
    let mut g = vec![[0.0; 2]; basis.len()];
    basis.values(xi, &mut v);
    basis.gradients(xi, &mut g);
    let mut val = C64::new(0.0, 0.0);
    let mut grad = [C64::new(0.0, 0.0); 2];
    for i in 0..n {
        let c = coeffs[k * n + i];
        val += c * v[i];
        let pg = map.push_gradient(g[i]);
        grad[0] += c * pg[0];
        grad[1] += c * pg[1];
    }
    (val, grad)
}

/// Value and divergence of a broken vector field of degree `q` at a physical point of element `k`.
pub fn eval_vector(
    mesh: &Mesh,
    basis: &crate::basis::ModalBasis,
    q: usize,
    coeffs: &[C64],
    k: usize,
    x: [f64; 2],
) -> ([C64; 2], C64) {
    let n = dim(q);
    let map = mesh.element_map(k);
    let xi = map.to_reference(x);
    let mut v = vec![0.0; basis.len()];
    let mut g = vec![[0.0; 2]; basis.len()];
    basis.values(xi, &mut v);
    basis.gradients(xi, &mut g);
    let mut val = [C64::new(0.0, 0.0); 2];
    let mut div = C64::new(0.0, 0.0);
    for d in 0..2 {
        for i in 0..n {
            let c = coeffs[k * 2 * n + d * n + i];
            val[d] += c * v[i];
            div += c * map.push_gradient(g[i])[d];
        }
    }
    (val, div)
}
