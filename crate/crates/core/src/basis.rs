//! Polynomial bases on the reference triangle and their affine push-forward.
//!
//! The broken spaces use a hierarchical modal basis that is orthonormal in
//! `L^2` of the reference triangle. The first `dim(q)` members of a degree-`p`
//! basis are exactly the degree-`q` basis, so lower-degree fields embed by
//! zero padding. Physical basis functions are `phi_i o F_K^{-1}` (unscaled), so
//! the element mass matrix is `2|K| I`.

use faer::{Mat, Side};

use crate::error::{HelmError, Result};
use crate::quadrature::triangle_rule;

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 10;

/// Dimension of `P_p` in two variables.
pub const fn dim(p: usize) -> usize {
    (p + 1) * (p + 2) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    ScalarBroken,
    ScalarLagrange,
    VectorFull,
}

/// Orthonormal hierarchical modal basis of `P_p` on the reference triangle.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    degree: usize,
    exps: Vec<(i32, i32)>,
    // row i: coefficients of phi_i in the centred monomials, lower triangular
    coef: Vec<f64>,
}

const CENTRE: f64 = 1.0 / 3.0;

impl ModalBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(HelmError::Capability(format!(
                "basis degree {degree} exceeds {MAX_DEGREE}"
            )));
        }
        let n = dim(degree);
        let mut exps = Vec::with_capacity(n);
        for d in 0..=degree as i32 {
            for b in 0..=d {
                exps.push((d - b, b));
            }
        }
        let mut basis = Self {
            degree,
            exps,
            coef: identity(n),
        };
        // two Gram-Schmidt sweeps through Cholesky: the second one cleans up
        // the round-off left by the first
        let rule = triangle_rule(2 * degree)?;
        for _ in 0..2 {
            let mut gram = Mat::<f64>::zeros(n, n);
            let mut v = vec![0.0; n];
            for (x, w) in rule.iter() {
                basis.values(x, &mut v);
                for i in 0..n {
                    for j in 0..=i {
                        gram[(i, j)] += w * v[i] * v[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..i {
                    gram[(j, i)] = gram[(i, j)];
                }
            }
            let llt = gram
                .llt(Side::Lower)
                .map_err(|e| HelmError::Numerical(format!("modal basis Gram: {e:?}")))?;
            let l = llt.L();
            // new coef = L^{-1} coef, by forward substitution row by row
            let old = basis.coef.clone();
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for k in 0..n {
                    let mut s = old[i * n + k];
                    for j in 0..i {
                        s -= l[(i, j)] * next[j * n + k];
                    }
                    next[i * n + k] = s / l[(i, i)];
                }
            }
            basis.coef = next;
        }
        Ok(basis)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }

    fn monomials(&self, x: [f64; 2], m: &mut [f64]) {
        let (dx, dy) = (x[0] - CENTRE, x[1] - CENTRE);
        for (k, &(a, b)) in self.exps.iter().enumerate() {
            m[k] = dx.powi(a) * dy.powi(b);
        }
    }

    fn combine(&self, m: &[f64], out: &mut [f64]) {
        let n = self.len();
        for i in 0..n {
            let row = &self.coef[i * n..i * n + i + 1];
            out[i] = row.iter().zip(m).map(|(c, v)| c * v).sum();
        }
    }

    pub fn values(&self, x: [f64; 2], out: &mut [f64]) {
        let mut m = vec![0.0; self.len()];
        self.monomials(x, &mut m);
        self.combine(&m, out);
    }

    /// Reference gradients.
    pub fn gradients(&self, x: [f64; 2], out: &mut [[f64; 2]]) {
        let n = self.len();
        let (dx, dy) = (x[0] - CENTRE, x[1] - CENTRE);
        let mut mx = vec![0.0; n];
        let mut my = vec![0.0; n];
        for (k, &(a, b)) in self.exps.iter().enumerate() {
            mx[k] = if a > 0 { a as f64 * dx.powi(a - 1) * dy.powi(b) } else { 0.0 };
            my[k] = if b > 0 { b as f64 * dx.powi(a) * dy.powi(b - 1) } else { 0.0 };
        }
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        self.combine(&mx, &mut gx);
        self.combine(&my, &mut gy);
        for i in 0..n {
            out[i] = [gx[i], gy[i]];
        }
    }

    /// Reference Hessians as `[xx, xy, yy]`.
    pub fn hessians(&self, x: [f64; 2], out: &mut [[f64; 3]]) {
        let n = self.len();
        let (dx, dy) = (x[0] - CENTRE, x[1] - CENTRE);
        let mut hxx = vec![0.0; n];
        let mut hxy = vec![0.0; n];
        let mut hyy = vec![0.0; n];
        for (k, &(a, b)) in self.exps.iter().enumerate() {
            let af = a as f64;
            let bf = b as f64;
            if a > 1 {
                hxx[k] = af * (af - 1.0) * dx.powi(a - 2) * dy.powi(b);
            }
            if a > 0 && b > 0 {
                hxy[k] = af * bf * dx.powi(a - 1) * dy.powi(b - 1);
            }
            if b > 1 {
                hyy[k] = bf * (bf - 1.0) * dx.powi(a) * dy.powi(b - 2);
            }
        }
        let mut c = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        self.combine(&hxx, &mut c[0]);
        self.combine(&hxy, &mut c[1]);
        self.combine(&hyy, &mut c[2]);
        for i in 0..n {
            out[i] = [c[0][i], c[1][i], c[2][i]];
        }
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

/// Equispaced lattice of degree `p` on the reference triangle, described by
/// integer barycentric indices `(l0, l1, l2)` with `l0 + l1 + l2 = p`.
///
/// Order: the three vertices, then edge nodes of local edge 0, 1, 2 (edge `j`
/// is opposite vertex `j`), then interior nodes.
pub fn lattice(p: usize) -> Vec<[usize; 3]> {
    let mut nodes = vec![[p, 0, 0], [0, p, 0], [0, 0, p]];
    for j in 0..3 {
        let (a, b) = ((j + 1) % 3, (j + 2) % 3);
        for k in 1..p {
            let mut l = [0; 3];
            l[a] = p - k;
            l[b] = k;
            nodes.push(l);
        }
    }
    for l1 in 1..p {
        for l2 in 1..p {
            if l1 + l2 < p {
                nodes.push([p - l1 - l2, l1, l2]);
            }
        }
    }
    nodes
}

pub fn lattice_point(l: [usize; 3], p: usize) -> [f64; 2] {
    [l[1] as f64 / p as f64, l[2] as f64 / p as f64]
}

/// Nodal Lagrange basis of degree `p` expressed in the modal basis.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    pub degree: usize,
    pub nodes: Vec<[usize; 3]>,
    /// `modal[i * n + a]`: coefficient of modal function `i` in Lagrange function `a`.
    pub modal: Vec<f64>,
}

impl LagrangeBasis {
    pub fn new(modal: &ModalBasis) -> Result<Self> {
        let p = modal.degree();
        if p == 0 {
            return Err(HelmError::Input("Lagrange basis needs p >= 1".into()));
        }
        let nodes = lattice(p);
        let n = nodes.len();
        let mut vdm = Mat::<f64>::zeros(n, n);
        let mut v = vec![0.0; n];
        for (a, l) in nodes.iter().enumerate() {
            modal.values(lattice_point(*l, p), &mut v);
            for i in 0..n {
                vdm[(a, i)] = v[i];
            }
        }
        let inv = dense_inverse(&vdm)?;
        let mut coef = vec![0.0; n * n];
        for i in 0..n {
            for a in 0..n {
                coef[i * n + a] = inv[(i, a)];
            }
        }
        Ok(Self {
            degree: p,
            nodes,
            modal: coef,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn values(&self, modal: &ModalBasis, x: [f64; 2], out: &mut [f64]) {
        let n = self.len();
        let mut m = vec![0.0; n];
        modal.values(x, &mut m);
        for a in 0..n {
            out[a] = (0..n).map(|i| self.modal[i * n + a] * m[i]).sum();
        }
    }
}

pub(crate) fn dense_inverse(m: &Mat<f64>) -> Result<Mat<f64>> {
    use faer::linalg::solvers::DenseSolveCore;
    let lu = m.full_piv_lu();
    let inv = lu.inverse();
    let finite = (0..inv.nrows()).all(|i| (0..inv.ncols()).all(|j| inv[(i, j)].is_finite()));
    if finite {
        Ok(inv)
    } else {
        Err(HelmError::Numerical("singular dense matrix".into()))
    }
}

/// Affine element map `x = v0 + J xi` with `J = [v1 - v0, v2 - v0]`.
#[derive(Debug, Clone, Copy)]
pub struct ElementMap {
    pub origin: [f64; 2],
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl ElementMap {
    pub fn new(v: [[f64; 2]; 3]) -> Result<Self> {
        let jac = [
            [v[1][0] - v[0][0], v[2][0] - v[0][0]],
            [v[1][1] - v[0][1], v[2][1] - v[0][1]],
        ];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let scale = jac.iter().flatten().map(|x| x * x).sum::<f64>();
        if det.abs() <= 1e-14 * scale.max(1e-300) || !det.is_finite() {
            return Err(HelmError::Geometry(format!(
                "degenerate element Jacobian (det = {det:e})"
            )));
        }
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        Ok(Self {
            origin: v[0],
            jac,
            inv,
            det,
        })
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let d = [x[0] - self.origin[0], x[1] - self.origin[1]];
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// `J^{-T} g`.
    pub fn push_gradient(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// `J^{-T} H J^{-1}` for a reference Hessian `[xx, xy, yy]`.
    pub fn push_hessian(&self, h: [f64; 3]) -> [f64; 3] {
        let m = [[h[0], h[1]], [h[1], h[2]]];
        let t = self.inv;
        let mut out = [[0.0; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += t[a][r] * m[a][b] * t[b][c];
                    }
                }
                out[r][c] = s;
            }
        }
        [out[0][0], out[0][1], out[1][1]]
    }
}

/// A basis set tied to a degree and kind, evaluating on physical elements.
#[derive(Debug, Clone)]
pub struct BasisSet {
    pub degree: usize,
    pub kind: BasisKind,
    modal: ModalBasis,
    lagrange: Option<LagrangeBasis>,
}

/// Values and physical gradients at a set of points. For vector bases the
/// value of member `(d, i)` is `phi_i e_d`; only the scalar factor is stored.
#[derive(Debug, Clone)]
pub struct PhysEval {
    pub values: Vec<Vec<f64>>,
    pub gradients: Vec<Vec<[f64; 2]>>,
}

impl BasisSet {
    pub fn new(degree: usize, kind: BasisKind) -> Result<Self> {
        if degree == 0 && kind == BasisKind::ScalarLagrange {
            return Err(HelmError::Input("Lagrange basis needs p >= 1".into()));
        }
        let modal = ModalBasis::new(degree)?;
        let lagrange = match kind {
            BasisKind::ScalarLagrange => Some(LagrangeBasis::new(&modal)?),
            _ => None,
        };
        Ok(Self {
            degree,
            kind,
            modal,
            lagrange,
        })
    }

    pub fn modal(&self) -> &ModalBasis {
        &self.modal
    }

    pub fn lagrange(&self) -> Option<&LagrangeBasis> {
        self.lagrange.as_ref()
    }

    /// Number of basis members (vector members counted per component).
    pub fn len(&self) -> usize {
        match self.kind {
            BasisKind::VectorFull => 2 * dim(self.degree),
            _ => dim(self.degree),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Evaluate the scalar factors and their physical gradients at physical points.
    pub fn eval_phys(&self, verts: [[f64; 2]; 3], points: &[[f64; 2]]) -> Result<PhysEval> {
        let map = ElementMap::new(verts)?;
        let n = dim(self.degree);
        let mut values = Vec::with_capacity(points.len());
        let mut gradients = Vec::with_capacity(points.len());
        let mut mv = vec![0.0; n];
        let mut mg = vec![[0.0; 2]; n];
        for &x in points {
            let xi = map.to_reference(x);
            self.modal.values(xi, &mut mv);
            self.modal.gradients(xi, &mut mg);
            match &self.lagrange {
                Some(lag) => {
                    let mut v = vec![0.0; n];
                    let mut g = vec![[0.0; 2]; n];
                    for a in 0..n {
                        for i in 0..n {
                            let c = lag.modal[i * n + a];
                            v[a] += c * mv[i];
                            g[a][0] += c * mg[i][0];
                            g[a][1] += c * mg[i][1];
                        }
                    }
                    values.push(v);
                    gradients.push(g.into_iter().map(|g| map.push_gradient(g)).collect());
                }
                None => {
                    values.push(mv.clone());
                    gradients.push(mg.iter().map(|&g| map.push_gradient(g)).collect());
                }
            }
        }
        Ok(PhysEval { values, gradients })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn modal_basis_is_orthonormal() {
        for p in 0..=6 {
            let b = ModalBasis::new(p).unwrap();
            let rule = triangle_rule(2 * p + 2).unwrap();
            let n = b.len();
            let mut v = vec![0.0; n];
            let mut g = vec![0.0; n * n];
            for (x, w) in rule.iter() {
                b.values(x, &mut v);
                for i in 0..n {
                    for j in 0..n {
                        g[i * n + j] += w * v[i] * v[j];
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((g[i * n + j] - e).abs() < 1e-13, "p={p} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn modal_basis_is_hierarchical() {
        let lo = ModalBasis::new(2).unwrap();
        let hi = ModalBasis::new(4).unwrap();
        let mut a = vec![0.0; lo.len()];
        let mut b = vec![0.0; hi.len()];
        for x in [[0.1, 0.2], [0.7, 0.05], [0.3, 0.3]] {
            lo.values(x, &mut a);
            hi.values(x, &mut b);
            for i in 0..lo.len() {
                assert!((a[i] - b[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p1_lagrange_is_nodal_and_partitions_unity() {
        let set = BasisSet::new(1, BasisKind::ScalarLagrange).unwrap();
        let verts = [[0.2, 0.1], [1.3, 0.4], [0.5, 1.1]];
        let ev = set.eval_phys(verts, &verts).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let e = if a == b { 1.0 } else { 0.0 };
                assert!((ev.values[a][b] - e).abs() < 1e-13);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let map = ElementMap::new(verts).unwrap();
        let pts: Vec<_> = (0..20)
            .map(|_| {
                let (s, t): (f64, f64) = (rng.random(), rng.random());
                let (s, t) = if s + t > 1.0 { (1.0 - s, 1.0 - t) } else { (s, t) };
                map.to_physical([s, t])
            })
            .collect();
        let ev = set.eval_phys(verts, &pts).unwrap();
        for v in &ev.values {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn affine_gradient_is_recovered() {
        // u = 2x - y interpolated by its nodal values on a p = 2 element
        let set = BasisSet::new(2, BasisKind::ScalarLagrange).unwrap();
        let verts = [[0.0, 0.0], [0.8, 0.3], [0.1, 0.9]];
        let map = ElementMap::new(verts).unwrap();
        let lag = set.lagrange().unwrap();
        let u = |x: [f64; 2]| 2.0 * x[0] - x[1];
        let nodal: Vec<f64> = lag
            .nodes
            .iter()
            .map(|&l| u(map.to_physical(lattice_point(l, 2))))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts: Vec<_> = (0..10)
            .map(|_| map.to_physical([rng.random::<f64>() * 0.5, rng.random::<f64>() * 0.5]))
            .collect();
        let ev = set.eval_phys(verts, &pts).unwrap();
        for k in 0..pts.len() {
            let mut g = [0.0; 2];
            for a in 0..nodal.len() {
                g[0] += nodal[a] * ev.gradients[k][a][0];
                g[1] += nodal[a] * ev.gradients[k][a][1];
            }
            assert!((g[0] - 2.0).abs() < 1e-12 && (g[1] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_element_is_a_geometry_error() {
        let set = BasisSet::new(1, BasisKind::ScalarBroken).unwrap();
        let r = set.eval_phys([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], &[[0.5, 0.5]]);
        assert!(matches!(r, Err(HelmError::Geometry(_))));
    }

    #[test]
    fn hessians_match_finite_differences() {
        let b = ModalBasis::new(3).unwrap();
        let n = b.len();
        let x = [0.27, 0.31];
        let eps = 1e-5;
        let mut h = vec![[0.0; 3]; n];
        b.hessians(x, &mut h);
        let mut gp = vec![[0.0; 2]; n];
        let mut gm = vec![[0.0; 2]; n];
        b.gradients([x[0] + eps, x[1]], &mut gp);
        b.gradients([x[0] - eps, x[1]], &mut gm);
        for i in 0..n {
            let fx = (gp[i][0] - gm[i][0]) / (2.0 * eps);
            let fxy = (gp[i][1] - gm[i][1]) / (2.0 * eps);
            assert!((fx - h[i][0]).abs() < 1e-5 * (1.0 + h[i][0].abs()));
            assert!((fxy - h[i][1]).abs() < 1e-5 * (1.0 + h[i][1].abs()));
        }
    }

    #[test]
    fn dimensions() {
        assert_eq!(BasisSet::new(2, BasisKind::VectorFull).unwrap().len(), 12);
        assert_eq!(BasisSet::new(3, BasisKind::ScalarBroken).unwrap().len(), 10);
        assert_eq!(lattice(3).len(), 10);
    }
}
