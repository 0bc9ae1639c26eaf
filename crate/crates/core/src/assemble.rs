//! Element and face loops producing the real sparse matrices every form is
//! built from. Entry `[i, j]` always pairs trial function `j` with test
//! function `i`.

use rayon::prelude::*;

use crate::coeffs::{apply2, inverse2, CoefficientSet, Mat2};
use crate::error::Result;
use crate::mesh::{BoundaryKind, FaceKind, Mesh};
use crate::sparse::RealCsr;
use crate::tabulate::{face_sides, FaceSide, Tabulation};

type Trip = Vec<(usize, usize, f64)>;

pub struct Assembler<'a> {
    pub mesh: &'a Mesh,
    pub coeffs: &'a CoefficientSet,
    pub tab: &'a Tabulation,
    /// Scalar degree.
    pub p: usize,
    /// Vector degree.
    pub q: usize,
}

/// Faces on which jumps are non-zero.
pub fn jump_face(kind: FaceKind) -> bool {
    matches!(kind, FaceKind::Interior | FaceKind::Boundary(BoundaryKind::Dirichlet))
}

fn collect(rows: usize, cols: usize, parts: Vec<Trip>) -> Result<RealCsr> {
    let trip: Trip = parts.into_iter().flatten().collect();
    RealCsr::from_triplets(rows, cols, &trip)
}

impl<'a> Assembler<'a> {
    pub fn ns(&self) -> usize {
        crate::basis::dim(self.p)
    }

    pub fn nv(&self) -> usize {
        crate::basis::dim(self.q)
    }

    fn n_broken(&self) -> usize {
        self.ns() * self.mesh.n_triangles()
    }

    fn n_vector(&self) -> usize {
        2 * self.nv() * self.mesh.n_triangles()
    }

    fn vdof(&self, k: usize, d: usize, i: usize) -> usize {
        k * 2 * self.nv() + d * self.nv() + i
    }

    fn elements<F>(&self, rows: usize, cols: usize, f: F) -> Result<RealCsr>
    where
        F: Fn(usize, &mut Trip) + Sync,
    {
        let parts: Vec<Trip> = (0..self.mesh.n_triangles())
            .into_par_iter()
            .map(|k| {
                let mut t = Vec::new();
                f(k, &mut t);
                t
            })
            .collect();
        collect(rows, cols, parts)
    }

    fn faces<F>(&self, rows: usize, cols: usize, keep: impl Fn(FaceKind) -> bool + Sync, f: F) -> Result<RealCsr>
    where
        F: Fn(usize, &[FaceSide], &mut Trip) + Sync,
    {
        let parts: Vec<Trip> = (0..self.mesh.faces().len())
            .into_par_iter()
            .map(|fi| {
                let mut t = Vec::new();
                if keep(self.mesh.face(fi).kind) {
                    let sides = face_sides(self.mesh, fi);
                    f(fi, &sides, &mut t);
                }
                t
            })
            .collect();
        collect(rows, cols, parts)
    }

    /// Scalar mass weighted by a per-element constant: `w_K 2|K| I`.
    pub fn scalar_mass(&self, weight: impl Fn(usize) -> f64) -> RealCsr {
        let n = self.ns();
        let d: Vec<f64> = (0..self.mesh.n_triangles())
            .flat_map(|k| std::iter::repeat_n(weight(k) * 2.0 * self.mesh.area(k), n))
            .collect();
        RealCsr::diagonal(&d)
    }

    /// Vector mass with a per-element 2x2 weight: `M_K (x) 2|K| I`.
    pub fn vector_mass(&self, weight: impl Fn(usize) -> Mat2 + Sync) -> Result<RealCsr> {
        let nv = self.nv();
        self.elements(self.n_vector(), self.n_vector(), |k, t| {
            let m = weight(k);
            let s = 2.0 * self.mesh.area(k);
            for d in 0..2 {
                for e in 0..2 {
                    if m[d][e] != 0.0 {
                        for i in 0..nv {
                            t.push((self.vdof(k, d, i), self.vdof(k, e, i), m[d][e] * s));
                        }
                    }
                }
            }
        })
    }

    pub fn a_mass(&self) -> Result<RealCsr> {
        self.vector_mass(|k| self.coeffs.a_k(self.mesh, k))
    }

    pub fn a_inv_mass(&self) -> Result<RealCsr> {
        self.vector_mass(|k| inverse2(&self.coeffs.a_k(self.mesh, k)))
    }

    /// `(A grad phi_j, grad phi_i)_K`.
    pub fn stiffness(&self) -> Result<RealCsr> {
        let n = self.ns();
        self.elements(self.n_broken(), self.n_broken(), |k, t| {
            let map = self.mesh.element_map(k);
            let a = self.coeffs.a_k(self.mesh, k);
            let mut local = vec![0.0; n * n];
            let mut g = vec![[0.0; 2]; n];
            for qp in 0..self.tab.n_vol() {
                let w = self.tab.vol_w[qp] * map.det.abs();
                let rg = self.tab.vol_ref_grads(qp);
                for i in 0..n {
                    g[i] = map.push_gradient(rg[i]);
                }
                for j in 0..n {
                    let ag = apply2(&a, g[j]);
                    for i in 0..n {
                        local[i * n + j] += w * (ag[0] * g[i][0] + ag[1] * g[i][1]);
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    t.push((k * n + i, k * n + j, local[i * n + j]));
                }
            }
        })
    }

    /// Elementwise `L^2` projection of the broken gradient into the vector space:
    /// `[(K,d,i), (K,j)] = (d_d phi_j, psi_i)_K / (2|K|)`.
    pub fn gradient(&self) -> Result<RealCsr> {
        let (n, nv) = (self.ns(), self.nv());
        self.elements(self.n_vector(), self.n_broken(), |k, t| {
            let map = self.mesh.element_map(k);
            let mut local = vec![0.0; 2 * nv * n];
            for qp in 0..self.tab.n_vol() {
                let w = self.tab.vol_w[qp];
                let v = self.tab.vol_values(qp);
                let rg = self.tab.vol_ref_grads(qp);
                for j in 0..n {
                    let g = map.push_gradient(rg[j]);
                    for d in 0..2 {
                        for i in 0..nv {
                            local[(d * nv + i) * n + j] += w * g[d] * v[i];
                        }
                    }
                }
            }
            for d in 0..2 {
                for i in 0..nv {
                    for j in 0..n {
                        t.push((self.vdof(k, d, i), k * n + j, local[(d * nv + i) * n + j]));
                    }
                }
            }
        })
    }

    /// `(phi_j, div psi_i)_K` (vector rows, scalar columns).
    pub fn divergence_pairing(&self) -> Result<RealCsr> {
        let (n, nv) = (self.ns(), self.nv());
        self.elements(self.n_vector(), self.n_broken(), |k, t| {
            let map = self.mesh.element_map(k);
            let mut local = vec![0.0; 2 * nv * n];
            for qp in 0..self.tab.n_vol() {
                let w = self.tab.vol_w[qp] * map.det.abs();
                let v = self.tab.vol_values(qp);
                let rg = self.tab.vol_ref_grads(qp);
                for i in 0..nv {
                    let g = map.push_gradient(rg[i]);
                    for d in 0..2 {
                        for j in 0..n {
                            local[(d * nv + i) * n + j] += w * g[d] * v[j];
                        }
                    }
                }
            }
            for d in 0..2 {
                for i in 0..nv {
                    for j in 0..n {
                        t.push((self.vdof(k, d, i), k * n + j, local[(d * nv + i) * n + j]));
                    }
                }
            }
        })
    }

    /// `w_K (div psi_j, div psi_i)_K` on the vector space.
    pub fn divergence_mass(&self, weight: impl Fn(usize) -> f64 + Sync) -> Result<RealCsr> {
        let nv = self.nv();
        self.elements(self.n_vector(), self.n_vector(), |k, t| {
            let map = self.mesh.element_map(k);
            let wk = weight(k);
            let m = 2 * nv;
            let mut local = vec![0.0; m * m];
            let mut div = vec![0.0; m];
            for qp in 0..self.tab.n_vol() {
                let w = self.tab.vol_w[qp] * map.det.abs() * wk;
                let rg = self.tab.vol_ref_grads(qp);
                for i in 0..nv {
                    let g = map.push_gradient(rg[i]);
                    div[i] = g[0];
                    div[nv + i] = g[1];
                }
                for a in 0..m {
                    for b in 0..m {
                        local[a * m + b] += w * div[a] * div[b];
                    }
                }
            }
            for a in 0..m {
                for b in 0..m {
                    let (da, ia) = (a / nv, a % nv);
                    let (db, ib) = (b / nv, b % nv);
                    t.push((self.vdof(k, da, ia), self.vdof(k, db, ib), local[a * m + b]));
                }
            }
        })
    }

    /// `sum_F w_F (phi_j, phi_i)_F` over faces of the given boundary kind.
    pub fn boundary_mass(&self, kind: BoundaryKind, weight: impl Fn(usize) -> f64 + Sync) -> Result<RealCsr> {
        let n = self.ns();
        self.faces(
            self.n_broken(),
            self.n_broken(),
            |k| k == FaceKind::Boundary(kind),
            |f, sides, t| {
                let s = sides[0];
                let len = self.mesh.face(f).length;
                let wf = weight(f);
                let mut local = vec![0.0; n * n];
                for qp in 0..self.tab.n_edge() {
                    let w = self.tab.edge_w[qp] * len * wf;
                    let v = self.tab.edge_values(s, qp);
                    for i in 0..n {
                        for j in 0..n {
                            local[i * n + j] += w * v[i] * v[j];
                        }
                    }
                }
                let k = s.element;
                for i in 0..n {
                    for j in 0..n {
                        t.push((k * n + i, k * n + j, local[i * n + j]));
                    }
                }
            },
        )
    }

    /// `sum_F w_F (psi_j . n, psi_i . n)_F` over faces of the given kind.
    pub fn boundary_normal_mass(&self, kind: BoundaryKind, weight: impl Fn(usize) -> f64 + Sync) -> Result<RealCsr> {
        let nv = self.nv();
        self.faces(
            self.n_vector(),
            self.n_vector(),
            |k| k == FaceKind::Boundary(kind),
            |f, sides, t| {
                let s = sides[0];
                let face = self.mesh.face(f);
                let wf = weight(f);
                let m = 2 * nv;
                let mut local = vec![0.0; m * m];
                let mut vn = vec![0.0; m];
                for qp in 0..self.tab.n_edge() {
                    let w = self.tab.edge_w[qp] * face.length * wf;
                    let v = self.tab.edge_values(s, qp);
                    for i in 0..nv {
                        vn[i] = v[i] * face.normal[0];
                        vn[nv + i] = v[i] * face.normal[1];
                    }
                    for a in 0..m {
                        for b in 0..m {
                            local[a * m + b] += w * vn[a] * vn[b];
                        }
                    }
                }
                let k = s.element;
                for a in 0..m {
                    for b in 0..m {
                        t.push((self.vdof(k, a / nv, a % nv), self.vdof(k, b / nv, b % nv), local[a * m + b]));
                    }
                }
            },
        )
    }

    /// `(phi_j, psi_i . n)_F` over Robin faces (vector rows, scalar columns).
    pub fn robin_normal_pairing(&self) -> Result<RealCsr> {
        let (n, nv) = (self.ns(), self.nv());
        self.faces(
            self.n_vector(),
            self.n_broken(),
            |k| k == FaceKind::Boundary(BoundaryKind::Robin),
            |f, sides, t| {
                let s = sides[0];
                let face = self.mesh.face(f);
                let k = s.element;
                let mut local = vec![0.0; 2 * nv * n];
                for qp in 0..self.tab.n_edge() {
                    let w = self.tab.edge_w[qp] * face.length;
                    let v = self.tab.edge_values(s, qp);
                    for d in 0..2 {
                        for i in 0..nv {
                            for j in 0..n {
                                local[(d * nv + i) * n + j] += w * v[i] * face.normal[d] * v[j];
                            }
                        }
                    }
                }
                for d in 0..2 {
                    for i in 0..nv {
                        for j in 0..n {
                            t.push((self.vdof(k, d, i), k * n + j, local[(d * nv + i) * n + j]));
                        }
                    }
                }
            },
        )
    }

    fn jump_weight(&self, f: usize, s: &FaceSide) -> f64 {
        if self.mesh.face(f).is_interior() {
            s.sign
        } else {
            1.0
        }
    }

    fn average_weight(&self, f: usize) -> f64 {
        if self.mesh.face(f).is_interior() {
            0.5
        } else {
            1.0
        }
    }

    /// `C[i, j] = ({{A grad phi_j}} . n_F, [[phi_i]])_F` over interior and Dirichlet faces.
    pub fn consistency(&self) -> Result<RealCsr> {
        let n = self.ns();
        self.faces(self.n_broken(), self.n_broken(), jump_face, |f, sides, t| {
            let face = self.mesh.face(f);
            let avg = self.average_weight(f);
            for si in sides {
                let ci = self.jump_weight(f, si);
                for sj in sides {
                    let map = self.mesh.element_map(sj.element);
                    let a = self.coeffs.a_k(self.mesh, sj.element);
                    let mut local = vec![0.0; n * n];
                    for qp in 0..self.tab.n_edge() {
                        let w = self.tab.edge_w[qp] * face.length;
                        let vi = self.tab.edge_values(*si, qp);
                        let rg = self.tab.edge_ref_grads(*sj, qp);
                        for j in 0..n {
                            let ag = apply2(&a, map.push_gradient(rg[j]));
                            let flux = avg * (ag[0] * face.normal[0] + ag[1] * face.normal[1]);
                            for i in 0..n {
                                local[i * n + j] += w * flux * ci * vi[i];
                            }
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            t.push((si.element * n + i, sj.element * n + j, local[i * n + j]));
                        }
                    }
                }
            }
        })
    }

    /// `sum_F w_F ([[phi_j]], [[phi_i]])_F` over interior and Dirichlet faces.
    pub fn jump_mass(&self, weight: impl Fn(usize) -> f64 + Sync) -> Result<RealCsr> {
        let n = self.ns();
        self.faces(self.n_broken(), self.n_broken(), jump_face, |f, sides, t| {
            let face = self.mesh.face(f);
            let wf = weight(f);
            for si in sides {
                let ci = self.jump_weight(f, si);
                for sj in sides {
                    let cj = self.jump_weight(f, sj);
                    let mut local = vec![0.0; n * n];
                    for qp in 0..self.tab.n_edge() {
                        let w = self.tab.edge_w[qp] * face.length * wf * ci * cj;
                        let vi = self.tab.edge_values(*si, qp);
                        let vj = self.tab.edge_values(*sj, qp);
                        for i in 0..n {
                            for j in 0..n {
                                local[i * n + j] += w * vi[i] * vj[j];
                            }
                        }
                    }
                    for i in 0..n {
                        for j in 0..n {
                            t.push((si.element * n + i, sj.element * n + j, local[i * n + j]));
                        }
                    }
                }
            }
        })
    }

    /// Right-hand side of the lifting: `[(K,d,i), j] = ([[phi_j]], {{psi_i}} . n_F)_F`.
    pub fn lifting_rhs(&self) -> Result<RealCsr> {
        let (n, nv) = (self.ns(), self.nv());
        self.faces(self.n_vector(), self.n_broken(), jump_face, |f, sides, t| {
            let face = self.mesh.face(f);
            let avg = self.average_weight(f);
            for sw in sides {
                for sj in sides {
                    let cj = self.jump_weight(f, sj);
                    let mut local = vec![0.0; 2 * nv * n];
                    for qp in 0..self.tab.n_edge() {
                        let w = self.tab.edge_w[qp] * face.length * avg * cj;
                        let vw = self.tab.edge_values(*sw, qp);
                        let vj = self.tab.edge_values(*sj, qp);
                        for d in 0..2 {
                            for i in 0..nv {
                                for j in 0..n {
                                    local[(d * nv + i) * n + j] += w * vw[i] * face.normal[d] * vj[j];
                                }
                            }
                        }
                    }
                    for d in 0..2 {
                        for i in 0..nv {
                            for j in 0..n {
                                t.push((self.vdof(sw.element, d, i), sj.element * n + j, local[(d * nv + i) * n + j]));
                            }
                        }
                    }
                }
            }
        })
    }

    /// Per vector row, `1 / (2|K|)` (inverse of the diagonal vector mass).
    pub fn inverse_vector_mass_diag(&self) -> Vec<f64> {
        let nv = self.nv();
        (0..self.mesh.n_triangles())
            .flat_map(|k| std::iter::repeat_n(1.0 / (2.0 * self.mesh.area(k)), 2 * nv))
            .collect()
    }
}
