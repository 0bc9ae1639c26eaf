//! Degree-of-freedom layouts: the broken space, its vector counterpart, the
//! conforming Lagrange subspace and the divergence-conforming BDM subspace.
//!
//! Broken scalar dof `(K, i)` sits at `K * n + i`; vector dof `(K, d, i)` at
//! `K * 2n + d * n + i`, where `n = dim P_q` of the vector degree `q`.

use std::fmt;

use faer::Mat;
use num_complex::Complex64;

use crate::basis::{dim, lattice, lattice_point, LagrangeBasis, ModalBasis};
use crate::error::{HelmError, Result};
use crate::mesh::{BoundaryKind, FaceKind, Mesh};
use crate::sparse::RealCsr;
use crate::tabulate::{face_sides, Tabulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrokenSpace {
    pub degree: usize,
    pub n_local: usize,
    pub n_elements: usize,
}

impl BrokenSpace {
    pub fn new(mesh: &Mesh, degree: usize) -> Self {
        Self {
            degree,
            n_local: dim(degree),
            n_elements: mesh.n_triangles(),
        }
    }

    pub fn ndofs(&self) -> usize {
        self.n_local * self.n_elements
    }

    pub fn dof(&self, k: usize, i: usize) -> usize {
        k * self.n_local + i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VectorSpace {
    pub degree: usize,
    pub n_local: usize,
    pub n_elements: usize,
}

impl VectorSpace {
    pub fn new(mesh: &Mesh, degree: usize) -> Self {
        Self {
            degree,
            n_local: dim(degree),
            n_elements: mesh.n_triangles(),
        }
    }

    pub fn ndofs(&self) -> usize {
        2 * self.n_local * self.n_elements
    }

    pub fn dof(&self, k: usize, d: usize, i: usize) -> usize {
        k * 2 * self.n_local + d * self.n_local + i
    }
}

#[derive(Debug, Clone)]
pub struct ConformingSpace {
    pub degree: usize,
    pub lagrange: LagrangeBasis,
    pub n_nodes: usize,
    /// Physical position of every global node.
    pub node_coords: Vec<[f64; 2]>,
    /// Global node of each local lattice node, per element.
    pub element_nodes: Vec<Vec<usize>>,
    /// Free dof of each global node; `None` on the closure of the Dirichlet boundary.
    pub node_dof: Vec<Option<usize>>,
    pub ndofs: usize,
    /// Broken coefficients of each conforming basis function (`broken x ndofs`).
    pub embed: RealCsr,
}

#[derive(Debug, Clone)]
pub struct DivSpace {
    pub degree: usize,
    /// Degree of the vector broken space this space is embedded into.
    pub vector_degree: usize,
    pub ndofs: usize,
    /// First dof of each face's moments; `None` for Neumann faces.
    pub face_offset: Vec<Option<usize>>,
    pub n_face_dofs: usize,
    /// Vector broken coefficients of each BDM basis function (`vector x ndofs`).
    pub embed: RealCsr,
}

#[derive(Debug, Clone)]
pub struct Spaces {
    pub p: usize,
    pub broken: BrokenSpace,
    pub vector: VectorSpace,
    pub conforming: ConformingSpace,
    pub bdm: DivSpace,
}

/// Builds the broken, vector (degree `vector_degree >= p`), conforming and BDM spaces.
pub fn make_spaces(mesh: &Mesh, p: usize, vector_degree: usize) -> Result<Spaces> {
    if p < 1 {
        return Err(HelmError::Input(format!("polynomial degree must be >= 1, got {p}")));
    }
    if vector_degree < p {
        return Err(HelmError::Input("vector degree below p".into()));
    }
    Ok(Spaces {
        p,
        broken: BrokenSpace::new(mesh, p),
        vector: VectorSpace::new(mesh, vector_degree),
        conforming: ConformingSpace::new(mesh, p)?,
        bdm: DivSpace::new(mesh, p, vector_degree)?,
    })
}

impl ConformingSpace {
    pub fn new(mesh: &Mesh, p: usize) -> Result<Self> {
        if p < 1 {
            return Err(HelmError::Input("Lagrange space needs p >= 1".into()));
        }
        let modal = ModalBasis::new(p)?;
        let lagrange = LagrangeBasis::new(&modal)?;
        let nodes = lattice(p);
        let n = nodes.len();
        let nv = mesh.vertices().len();
        let nf = mesh.faces().len();
        let per_edge = p - 1;
        let n_int = n - 3 - 3 * per_edge;
        let n_nodes = nv + nf * per_edge + mesh.n_triangles() * n_int;
        let mut node_coords = vec![[0.0; 2]; n_nodes];
        let mut element_nodes = Vec::with_capacity(mesh.n_triangles());
        for k in 0..mesh.n_triangles() {
            let t = mesh.triangles()[k];
            let faces = mesh.triangle_faces(k);
            let map = mesh.element_map(k);
            let mut ids = Vec::with_capacity(n);
            let mut interior = 0;
            for l in &nodes {
                let zeros: Vec<usize> = (0..3).filter(|&j| l[j] == 0).collect();
                let id = match zeros.len() {
                    2 => t[(0..3).find(|&j| l[j] != 0).unwrap()],
                    1 => {
                        let j = zeros[0];
                        let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                        let hi = if t[a] > t[b] { a } else { b };
                        nv + faces[j] * per_edge + (l[hi] - 1)
                    }
                    _ => {
                        interior += 1;
                        nv + nf * per_edge + k * n_int + (interior - 1)
                    }
                };
                node_coords[id] = map.to_physical(lattice_point(*l, p));
                ids.push(id);
            }
            element_nodes.push(ids);
        }
        let mut constrained = vec![false; n_nodes];
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.kind == FaceKind::Boundary(BoundaryKind::Dirichlet) {
                constrained[face.vertices[0]] = true;
                constrained[face.vertices[1]] = true;
                for e in 0..per_edge {
                    constrained[nv + f * per_edge + e] = true;
                }
            }
        }
        let mut node_dof = vec![None; n_nodes];
        let mut ndofs = 0;
        for (g, c) in constrained.iter().enumerate() {
            if !c {
                node_dof[g] = Some(ndofs);
                ndofs += 1;
            }
        }
        let mut trip = Vec::new();
        for (k, ids) in element_nodes.iter().enumerate() {
            for (a, &g) in ids.iter().enumerate() {
                if let Some(c) = node_dof[g] {
                    for i in 0..n {
                        let v = lagrange.modal[i * n + a];
                        if v != 0.0 {
                            trip.push((k * n + i, c, v));
                        }
                    }
                }
            }
        }
        let embed = RealCsr::from_triplets(mesh.n_triangles() * n, ndofs, &trip)?;
        Ok(Self {
            degree: p,
            lagrange,
            n_nodes,
            node_coords,
            element_nodes,
            node_dof,
            ndofs,
            embed,
        })
    }

    /// Nodal interpolation; constrained nodes are dropped.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> Complex64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.ndofs];
        for (g, d) in self.node_dof.iter().enumerate() {
            if let Some(d) = d {
                out[*d] = f(self.node_coords[g]);
            }
        }
        out
    }

    pub fn to_broken(&self, c: &[Complex64]) -> Vec<Complex64> {
        self.embed.mul_vec(c)
    }
}

/// Orthonormal Legendre polynomial of degree `m` on `[0, 1]`.
pub fn legendre01(m: usize, t: f64) -> f64 {
    let x = 2.0 * t - 1.0;
    let (mut p0, mut p1) = (1.0, x);
    let val = match m {
        0 => 1.0,
        1 => x,
        _ => {
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    };
    val * ((2 * m + 1) as f64).sqrt()
}

impl DivSpace {
    pub fn new(mesh: &Mesh, p: usize, vector_degree: usize) -> Result<Self> {
        if p < 1 {
            return Err(HelmError::Input("BDM space needs p >= 1".into()));
        }
        let tab = Tabulation::new(p, 2 * p + 2, 2 * p + 2)?;
        let n = tab.n;
        let nq = dim(vector_degree);
        let m = p + 1;
        let mut face_offset = vec![None; mesh.faces().len()];
        let mut next = 0;
        for (f, face) in mesh.faces().iter().enumerate() {
            if face.kind != FaceKind::Boundary(BoundaryKind::Neumann) {
                face_offset[f] = Some(next);
                next += m;
            }
        }
        let n_face_dofs = next;
        let n_bubbles = (p + 1) * (p - 1);
        let ndofs = n_face_dofs + n_bubbles * mesh.n_triangles();
        let mut trip = Vec::new();
        for k in 0..mesh.n_triangles() {
            let faces = mesh.triangle_faces(k);
            // moments of the normal trace against orthonormal Legendre polynomials
            let mut dmat = Mat::<f64>::zeros(3 * m, 2 * n);
            for (j, &f) in faces.iter().enumerate() {
                let side = face_sides(mesh, f)
                    .into_iter()
                    .find(|s| s.element == k)
                    .expect("face owned by its element");
                debug_assert_eq!(side.local, j);
                let nf = mesh.face(f).normal;
                for q in 0..tab.n_edge() {
                    let t = tab.edge_t[q];
                    let w = tab.edge_w[q];
                    let vals = tab.edge_values(side, q);
                    for mm in 0..m {
                        let lq = legendre01(mm, t) * w;
                        for i in 0..n {
                            dmat[(j * m + mm, i)] += lq * vals[i] * nf[0];
                            dmat[(j * m + mm, n + i)] += lq * vals[i] * nf[1];
                        }
                    }
                }
            }
            let svd = dmat
                .svd()
                .map_err(|e| HelmError::Numerical(format!("BDM moment SVD: {e:?}")))?;
            let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
            let rank = 3 * m;
            if s[rank - 1] < 1e-10 * s[0] {
                return Err(HelmError::Numerical("BDM moments are not unisolvent".into()));
            }
            // right inverse D^+ = V_r S^{-1} U^T
            for (j, &f) in faces.iter().enumerate() {
                let Some(off) = face_offset[f] else { continue };
                for mm in 0..m {
                    let row = j * m + mm;
                    for c in 0..2 * n {
                        let mut val = 0.0;
                        for r in 0..rank {
                            val += v[(c, r)] * u[(row, r)] / s[r];
                        }
                        if val.abs() > 1e-15 {
                            let (d, i) = (c / n, c % n);
                            trip.push((k * 2 * nq + d * nq + i, off + mm, val));
                        }
                    }
                }
            }
            for b in 0..n_bubbles {
                let col = rank + b;
                for c in 0..2 * n {
                    let val = v[(c, col)];
                    if val.abs() > 1e-15 {
                        let (d, i) = (c / n, c % n);
                        trip.push((k * 2 * nq + d * nq + i, n_face_dofs + k * n_bubbles + b, val));
                    }
                }
            }
        }
        let embed = RealCsr::from_triplets(2 * nq * mesh.n_triangles(), ndofs, &trip)?;
        Ok(Self {
            degree: p,
            vector_degree,
            ndofs,
            face_offset,
            n_face_dofs,
            embed,
        })
    }
}

/// Which space a coefficient vector lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSpace {
    Broken { degree: usize, elements: usize },
    Vector { degree: usize, elements: usize },
    Conforming { degree: usize, dofs: usize },
    Div { degree: usize, dofs: usize },
}

impl FieldSpace {
    pub fn ndofs(&self) -> usize {
        match *self {
            FieldSpace::Broken { degree, elements } => dim(degree) * elements,
            FieldSpace::Vector { degree, elements } => 2 * dim(degree) * elements,
            FieldSpace::Conforming { dofs, .. } | FieldSpace::Div { dofs, .. } => dofs,
        }
    }
}

impl fmt::Display for FieldSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldSpace::Broken { degree, elements } => write!(f, "broken p={degree} elements={elements}"),
            FieldSpace::Vector { degree, elements } => write!(f, "vector p={degree} elements={elements}"),
            FieldSpace::Conforming { degree, dofs } => write!(f, "conforming p={degree} dofs={dofs}"),
            FieldSpace::Div { degree, dofs } => write!(f, "bdm p={degree} dofs={dofs}"),
        }
    }
}

impl std::str::FromStr for FieldSpace {
    type Err = HelmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || HelmError::Parse(format!("bad space descriptor '{s}'"));
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let value = |part: &str, key: &str| -> Result<usize> {
            part.strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(bad)
        };
        let degree = value(parts[1], "p=")?;
        match parts[0] {
            "broken" => Ok(FieldSpace::Broken { degree, elements: value(parts[2], "elements=")? }),
            "vector" => Ok(FieldSpace::Vector { degree, elements: value(parts[2], "elements=")? }),
            "conforming" => Ok(FieldSpace::Conforming { degree, dofs: value(parts[2], "dofs=")? }),
            "bdm" => Ok(FieldSpace::Div { degree, dofs: value(parts[2], "dofs=")? }),
            _ => Err(bad()),
        }
    }
}

/// Complex coefficient vector tagged with its space.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokenField {
    pub space: FieldSpace,
    pub coeffs: Vec<Complex64>,
}

const FIELD_HEADER: &str = "helmdg-field v1";

impl BrokenField {
    pub fn new(space: FieldSpace, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(HelmError::Input(format!(
                "{} coefficients for space '{space}' with {} dofs",
                coeffs.len(),
                space.ndofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: FieldSpace) -> Self {
        Self { space, coeffs: vec![Complex64::new(0.0, 0.0); space.ndofs()] }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(32 * self.coeffs.len() + 64);
        s.push_str(FIELD_HEADER);
        s.push('\n');
        s.push_str(&self.space.to_string());
        s.push('\n');
        for c in &self.coeffs {
            s.push_str(&format!("{} {}\n", c.re, c.im));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(FIELD_HEADER) {
            return Err(HelmError::Parse(format!("expected '{FIELD_HEADER}'")));
        }
        let space: FieldSpace = lines
            .next()
            .ok_or_else(|| HelmError::Parse("missing space descriptor".into()))?
            .trim()
            .parse()?;
        let mut coeffs = Vec::with_capacity(space.ndofs());
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let mut next = || -> Result<f64> {
                it.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| HelmError::Parse(format!("coefficient line {}: expected 're im'", n + 3)))
            };
            let re = next()?;
            let im = next()?;
            coeffs.push(Complex64::new(re, im));
        }
        Self::new(space, coeffs)
    }
}

/// Elementwise `L^2` projection onto the broken space (exact for polynomials of degree `<= p`).
pub fn interpolate_broken(
    mesh: &Mesh,
    tab: &Tabulation,
    p: usize,
    f: impl Fn([f64; 2]) -> Complex64,
) -> Vec<Complex64> {
    let n = dim(p);
    let mut out = vec![Complex64::new(0.0, 0.0); mesh.n_triangles() * n];
    for k in 0..mesh.n_triangles() {
        let map = mesh.element_map(k);
        for q in 0..tab.n_vol() {
            let x = map.to_physical(tab.vol_pts[q]);
            let fx = f(x) * tab.vol_w[q];
            let v = tab.vol_values(q);
            for i in 0..n {
                // reference mass is the identity; the Jacobian cancels
                out[k * n + i] += fx * v[i];
            }
        }
    }
    out
}

/// Value of a broken scalar field of degree `p` at reference point `xi` of element `k`.
pub fn eval_broken(basis: &ModalBasis, p: usize, coeffs: &[Complex64], k: usize, xi: [f64; 2]) -> Complex64 {
    let n = dim(p);
    let mut v = vec![0.0; basis.len()];
    basis.values(xi, &mut v);
    (0..n).map(|i| coeffs[k * n + i] * v[i]).sum()
}
