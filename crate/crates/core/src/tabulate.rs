//! Reference-element tables of the modal basis at volume and edge quadrature
//! points, shared by every element of a mesh.

use crate::basis::{dim, ModalBasis};
use crate::error::Result;
use crate::mesh::Mesh;
use crate::quadrature::{edge_rule, triangle_rule};

const REF_VERTS: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

/// Point on local edge `j` at fraction `s` from vertex `(j+1)%3` to `(j+2)%3`.
pub fn edge_ref_point(j: usize, s: f64) -> [f64; 2] {
    let a = REF_VERTS[(j + 1) % 3];
    let b = REF_VERTS[(j + 2) % 3];
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

#[derive(Debug, Clone)]
pub struct Tabulation {
    pub degree: usize,
    pub n: usize,
    pub basis: ModalBasis,
    pub vol_pts: Vec<[f64; 2]>,
    /// Reference weights (sum 1/2).
    pub vol_w: Vec<f64>,
    pub vol_val: Vec<f64>,
    pub vol_grad: Vec<[f64; 2]>,
    pub vol_hess: Vec<[f64; 3]>,
    /// Face parameters in `[0, 1]` and weights (sum 1).
    pub edge_t: Vec<f64>,
    pub edge_w: Vec<f64>,
    /// `[local edge][forward?]`: values at the face points, in face-parameter order.
    edge_val: Vec<Vec<f64>>,
    edge_grad: Vec<Vec<[f64; 2]>>,
}

impl Tabulation {
    pub fn new(degree: usize, vol_order: usize, edge_order: usize) -> Result<Self> {
        let basis = ModalBasis::new(degree)?;
        let n = dim(degree);
        let vr = triangle_rule(vol_order)?;
        let er = edge_rule(edge_order)?;
        let mut vol_val = vec![0.0; vr.len() * n];
        let mut vol_grad = vec![[0.0; 2]; vr.len() * n];
        let mut vol_hess = vec![[0.0; 3]; vr.len() * n];
        for (q, &x) in vr.points.iter().enumerate() {
            basis.values(x, &mut vol_val[q * n..(q + 1) * n]);
            basis.gradients(x, &mut vol_grad[q * n..(q + 1) * n]);
            basis.hessians(x, &mut vol_hess[q * n..(q + 1) * n]);
        }
        let edge_t: Vec<f64> = er.points.iter().map(|p| p[0]).collect();
        let mut edge_val = Vec::with_capacity(6);
        let mut edge_grad = Vec::with_capacity(6);
        for j in 0..3 {
            for forward in [false, true] {
                let mut v = vec![0.0; edge_t.len() * n];
                let mut g = vec![[0.0; 2]; edge_t.len() * n];
                for (q, &t) in edge_t.iter().enumerate() {
                    let s = if forward { t } else { 1.0 - t };
                    let x = edge_ref_point(j, s);
                    basis.values(x, &mut v[q * n..(q + 1) * n]);
                    basis.gradients(x, &mut g[q * n..(q + 1) * n]);
                }
                edge_val.push(v);
                edge_grad.push(g);
            }
        }
        Ok(Self {
            degree,
            n,
            basis,
            vol_pts: vr.points,
            vol_w: vr.weights,
            vol_val,
            vol_grad,
            vol_hess,
            edge_t,
            edge_w: er.weights,
            edge_val,
            edge_grad,
        })
    }

    pub fn n_vol(&self) -> usize {
        self.vol_w.len()
    }

    pub fn n_edge(&self) -> usize {
        self.edge_w.len()
    }

    pub fn vol_values(&self, q: usize) -> &[f64] {
        &self.vol_val[q * self.n..(q + 1) * self.n]
    }

    pub fn vol_ref_grads(&self, q: usize) -> &[[f64; 2]] {
        &self.vol_grad[q * self.n..(q + 1) * self.n]
    }

    pub fn vol_ref_hess(&self, q: usize) -> &[[f64; 3]] {
        &self.vol_hess[q * self.n..(q + 1) * self.n]
    }

    pub fn edge_values(&self, side: FaceSide, q: usize) -> &[f64] {
        let v = &self.edge_val[2 * side.local + side.forward as usize];
        &v[q * self.n..(q + 1) * self.n]
    }

    pub fn edge_ref_grads(&self, side: FaceSide, q: usize) -> &[[f64; 2]] {
        let v = &self.edge_grad[2 * side.local + side.forward as usize];
        &v[q * self.n..(q + 1) * self.n]
    }
}

/// One owner of a face, seen from the face.
#[derive(Debug, Clone, Copy)]
pub struct FaceSide {
    pub element: usize,
    pub local: usize,
    /// Whether the local edge runs in the face-parameter direction.
    pub forward: bool,
    /// `n_K . n_F`.
    pub sign: f64,
}

pub fn face_sides(mesh: &Mesh, f: usize) -> Vec<FaceSide> {
    let face = mesh.face(f);
    let mut out = Vec::with_capacity(2);
    for slot in 0..2 {
        if let Some(k) = face.owners[slot] {
            let j = face.local[slot];
            let t = mesh.triangles()[k];
            out.push(FaceSide {
                element: k,
                local: j,
                forward: t[(j + 1) % 3] == face.vertices[0],
                sign: face.sign(slot),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{uniform_label, unit_square, BoundaryKind};

    #[test]
    fn face_traces_agree_with_physical_points() {
        let m = unit_square(2, &uniform_label(BoundaryKind::Neumann)).unwrap();
        let tab = Tabulation::new(2, 6, 6).unwrap();
        for f in 0..m.faces().len() {
            for side in face_sides(&m, f) {
                let map = m.element_map(side.element);
                for (q, &t) in tab.edge_t.iter().enumerate() {
                    let xi = map.to_reference(m.face_point(f, t));
                    let mut v = vec![0.0; tab.n];
                    tab.basis.values(xi, &mut v);
                    for (a, b) in v.iter().zip(tab.edge_values(side, q)) {
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
