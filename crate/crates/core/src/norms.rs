//! Energy and dagger norms, the duality pairing, conforming projections and
//! the nodal averaging operator.

use crate::basis::{dim, lattice_point};
use crate::coeffs::{apply2, inverse2};
use crate::dg::Discretization;
use crate::error::{HelmError, Result};
use crate::linalg::{complement_basis, generalized_eigenvalues, SpdSolver};
use crate::mesh::BoundaryKind;
use crate::sampling::{eval_scalar, eval_vector, FacePoint, QPoint, QPoints};
use crate::sparse::RealCsr;
use crate::C64;

/// Broken spaces larger than this are refused by the dense margin computation.
pub const DENSE_MARGIN_LIMIT: usize = 3000;

/// A scalar target with its gradient (taken as the discrete gradient, i.e. the
/// target is assumed conforming).
pub trait ScalarTarget: Sync {
    fn vol(&self, q: &QPoint) -> (C64, [C64; 2]);
    fn face(&self, q: &FacePoint) -> C64 {
        self.vol(&QPoint { element: q.element, source: q.source, x: q.x, w: q.w }).0
    }
}

/// A vector target with its divergence.
pub trait VectorTarget: Sync {
    fn vol(&self, q: &QPoint) -> ([C64; 2], C64);
    fn face(&self, q: &FacePoint) -> [C64; 2] {
        self.vol(&QPoint { element: q.element, source: q.source, x: q.x, w: q.w }).0
    }
}

/// Analytic scalar field `x -> (u, grad u)`.
pub struct AnalyticScalar<F>(pub F);

impl<F: Fn([f64; 2]) -> (C64, [C64; 2]) + Sync> ScalarTarget for AnalyticScalar<F> {
    fn vol(&self, q: &QPoint) -> (C64, [C64; 2]) {
        (self.0)(q.x)
    }
}

/// Analytic vector field `x -> (w, div w)`.
pub struct AnalyticVector<F>(pub F);

impl<F: Fn([f64; 2]) -> ([C64; 2], C64) + Sync> VectorTarget for AnalyticVector<F> {
    fn vol(&self, q: &QPoint) -> ([C64; 2], C64) {
        (self.0)(q.x)
    }
}

/// Result of a conforming projection; `degenerate` when the target space is empty.
#[derive(Debug, Clone)]
pub struct Projection {
    pub coeffs: Vec<C64>,
    pub degenerate: bool,
}

/// Squared error contributions of the broken energy norm.
#[derive(Debug, Clone)]
pub struct EnergyError {
    /// `||e||_{mu}^2`.
    pub l2_mu_sq: f64,
    /// `||e||_{gamma, Robin}^2`.
    pub robin_sq: f64,
    /// `||A^{1/2} (grad u - G u_h)||^2`.
    pub grad_sq: f64,
    /// `omega^2 mu |e|^2 + |A^{1/2} G e|^2` per element, Robin terms on the owner.
    pub per_element_sq: Vec<f64>,
    pub omega: f64,
}

impl EnergyError {
    pub fn energy(&self) -> f64 {
        (self.omega * self.omega * self.l2_mu_sq + self.omega * self.robin_sq + self.grad_sq).sqrt()
    }

    pub fn l2_mu(&self) -> f64 {
        self.l2_mu_sq.sqrt()
    }

    pub fn robin(&self) -> f64 {
        self.robin_sq.sqrt()
    }
}

#[derive(Debug)]
pub struct NormWorkspace {
    /// `max(1, omega^2 h_K^2 / vartheta_K^2) alpha_K / h_K^2`.
    pub w_k: Vec<f64>,
    /// `max(1, omega h_F / vartheta_F) alpha_F / h_F` on Robin faces, 0 elsewhere.
    pub w_f: Vec<f64>,
    /// `h_K^2 / alpha_K`.
    pub div_k: Vec<f64>,
    /// `h_F / alpha_F` on Robin faces, 0 elsewhere.
    pub div_f: Vec<f64>,
    pub dagger1: RealCsr,
    pub daggerdiv: RealCsr,
    /// `Q[w, phi] = (G phi, w) + (phi, div w) - (phi, w . n)_R`.
    pub pairing: RealCsr,
    pub energy: RealCsr,
    /// Nodal averaging into the conforming space (conforming x broken).
    pub averaging: RealCsr,
    gram_g: SpdSolver,
    gram_d: SpdSolver,
}

impl NormWorkspace {
    pub fn new(d: &Discretization) -> Result<Self> {
        let mesh = &d.mesh;
        let c = &d.coeffs;
        let w = c.omega;
        let asm = d.assembler(&d.tab);
        let nt = mesh.n_triangles();
        let w_k: Vec<f64> = (0..nt)
            .map(|k| {
                let hk = mesh.h(k);
                let r = w * hk / c.theta_k(mesh, k);
                (r * r).max(1.0) * c.alpha_k(mesh, k) / (hk * hk)
            })
            .collect();
        let div_k: Vec<f64> = (0..nt).map(|k| mesh.h(k).powi(2) / c.alpha_k(mesh, k)).collect();
        let mut w_f = vec![0.0; mesh.faces().len()];
        let mut div_f = vec![0.0; mesh.faces().len()];
        for (f, face) in mesh.faces().iter().enumerate() {
            if let Some(theta) = c.theta_f(mesh, f) {
                let hf = face.length;
                let af = c.alpha_f(mesh, f);
                w_f[f] = (w * hf / theta).max(1.0) * af / hf;
                div_f[f] = hf / af;
            }
        }
        let fm = &d.forms;
        let ggrad = fm.dgrad.transpose().matmul(&fm.mass_a.matmul(&fm.dgrad));
        let dagger1 = asm
            .scalar_mass(|k| w_k[k])
            .add(&ggrad)
            .add(&asm.boundary_mass(BoundaryKind::Robin, |f| w_f[f])?);
        let daggerdiv = asm
            .a_inv_mass()?
            .add(&asm.divergence_mass(|k| div_k[k])?)
            .add(&asm.boundary_normal_mass(BoundaryKind::Robin, |f| div_f[f])?);
        let pairing = fm
            .vmass
            .matmul(&fm.dgrad)
            .add(&asm.divergence_pairing()?)
            .sub(&asm.robin_normal_pairing()?);
        let energy = fm.mass_mu.lincomb(w * w, &fm.robin, w).add(&ggrad);
        let averaging = averaging_matrix(d)?;
        let e = &d.spaces.conforming.embed;
        let gram_g = SpdSolver::new(&e.transpose().matmul(&dagger1.matmul(e)), "conforming projection")?;
        let ed = &d.spaces.bdm.embed;
        let gram_d = SpdSolver::new(&ed.transpose().matmul(&daggerdiv.matmul(ed)), "BDM projection")?;
        Ok(Self { w_k, w_f, div_k, div_f, dagger1, daggerdiv, pairing, energy, averaging, gram_g, gram_d })
    }

    pub fn energy_norm(&self, v: &[C64]) -> f64 {
        self.energy.quad(v).max(0.0).sqrt()
    }

    pub fn dagger1_norm(&self, v: &[C64]) -> f64 {
        self.dagger1.quad(v).max(0.0).sqrt()
    }

    /// `w` in broken vector coefficients.
    pub fn daggerdiv_norm(&self, w: &[C64]) -> f64 {
        self.daggerdiv.quad(w).max(0.0).sqrt()
    }

    /// `(G phi, w) + (phi, div w) - (phi, w . n)_R` with `w` in broken vector coefficients.
    pub fn pairing(&self, phi: &[C64], w: &[C64]) -> C64 {
        self.pairing.cform(w, phi)
    }

    /// `pi_h^g v` for a broken field `v`, in conforming coefficients.
    pub fn project_g(&self, d: &Discretization, v: &[C64]) -> Projection {
        let e = &d.spaces.conforming.embed;
        self.solve_g(e.tmul_vec(&self.dagger1.mul_vec(v)))
    }

    /// `pi_h^d w` for a broken vector field `w`, in BDM coefficients.
    pub fn project_d(&self, d: &Discretization, w: &[C64]) -> Projection {
        let e = &d.spaces.bdm.embed;
        self.solve_d(e.tmul_vec(&self.daggerdiv.mul_vec(w)))
    }

    fn solve_g(&self, b: Vec<C64>) -> Projection {
        Projection { degenerate: self.gram_g.is_empty(), coeffs: self.gram_g.solve(&b) }
    }

    fn solve_d(&self, b: Vec<C64>) -> Projection {
        Projection { degenerate: self.gram_d.is_empty(), coeffs: self.gram_d.solve(&b) }
    }

    /// `pi_h^g u` for a target sampled on `qp`.
    pub fn project_g_target(&self, d: &Discretization, qp: &QPoints, u: &dyn ScalarTarget) -> Projection {
        let n = dim(d.p);
        let basis = &d.tab.basis;
        let mut rhs = vec![C64::new(0.0, 0.0); d.n_broken()];
        let mut v = vec![0.0; basis.len()];
        let mut g = vec![[0.0; 2]; basis.len()];
        for q in &qp.vol {
            let k = q.element;
            let map = d.mesh.element_map(k);
            let xi = map.to_reference(q.x);
            basis.values(xi, &mut v);
            basis.gradients(xi, &mut g);
            let (val, grad) = u.vol(q);
            let a = d.coeffs.a_k(&d.mesh, k);
            let ag = [a[0][0] * grad[0] + a[0][1] * grad[1], a[1][0] * grad[0] + a[1][1] * grad[1]];
            for i in 0..n {
                let pg = map.push_gradient(g[i]);
                rhs[k * n + i] += (val * (self.w_k[k] * v[i]) + ag[0] * pg[0] + ag[1] * pg[1]) * q.w;
            }
        }
        for fp in &qp.robin {
            let xi = d.mesh.element_map(fp.element).to_reference(fp.x);
            basis.values(xi, &mut v);
            let val = u.face(fp) * (self.w_f[fp.face] * fp.w);
            for i in 0..n {
                rhs[fp.element * n + i] += val * v[i];
            }
        }
        self.solve_g(d.spaces.conforming.embed.tmul_vec(&rhs))
    }

    /// `pi_h^d w` for a target sampled on `qp`.
    pub fn project_d_target(&self, d: &Discretization, qp: &QPoints, w: &dyn VectorTarget) -> Projection {
        let nv = dim(d.q);
        let basis = &d.tab.basis;
        let mut rhs = vec![C64::new(0.0, 0.0); d.n_vector()];
        let mut v = vec![0.0; basis.len()];
        let mut g = vec![[0.0; 2]; basis.len()];
        for q in &qp.vol {
            let k = q.element;
            let map = d.mesh.element_map(k);
            let xi = map.to_reference(q.x);
            basis.values(xi, &mut v);
            basis.gradients(xi, &mut g);
            let (val, div) = w.vol(q);
            let ai = inverse2(&d.coeffs.a_k(&d.mesh, k));
            let aw = [ai[0][0] * val[0] + ai[0][1] * val[1], ai[1][0] * val[0] + ai[1][1] * val[1]];
            for i in 0..nv {
                let pg = map.push_gradient(g[i]);
                for dd in 0..2 {
                    rhs[k * 2 * nv + dd * nv + i] += (aw[dd] * v[i] + div * (self.div_k[k] * pg[dd])) * q.w;
                }
            }
        }
        for fp in &qp.robin {
            let xi = d.mesh.element_map(fp.element).to_reference(fp.x);
            basis.values(xi, &mut v);
            let val = w.face(fp);
            let wn = (val[0] * fp.normal[0] + val[1] * fp.normal[1]) * (self.div_f[fp.face] * fp.w);
            for i in 0..nv {
                for dd in 0..2 {
                    rhs[fp.element * 2 * nv + dd * nv + i] += wn * (fp.normal[dd] * v[i]);
                }
            }
        }
        self.solve_d(d.spaces.bdm.embed.tmul_vec(&rhs))
    }

    /// `||u - v||_{dagger,1}` by quadrature on `qp`, with `G(u) = grad u`.
    pub fn dagger1_distance(&self, d: &Discretization, qp: &QPoints, u: &dyn ScalarTarget, v: &[C64]) -> f64 {
        let gv = d.discrete_gradient(v);
        let mut s = 0.0;
        for q in &qp.vol {
            let k = q.element;
            let (val, grad) = u.vol(q);
            let (vh, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, v, k, q.x);
            let (gh, _) = eval_vector(&d.mesh, &d.tab.basis, d.q, &gv, k, q.x);
            let e = [grad[0] - gh[0], grad[1] - gh[1]];
            s += q.w * (self.w_k[k] * (val - vh).norm_sqr() + a_norm_sq(&d.coeffs.a_k(&d.mesh, k), e));
        }
        for fp in &qp.robin {
            let (vh, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, v, fp.element, fp.x);
            s += fp.w * self.w_f[fp.face] * (u.face(fp) - vh).norm_sqr();
        }
        s.max(0.0).sqrt()
    }

    /// `||w - w_h||_{dagger,div}` by quadrature on `qp`; `w_h` in broken vector coefficients.
    pub fn daggerdiv_distance(&self, d: &Discretization, qp: &QPoints, w: &dyn VectorTarget, wh: &[C64]) -> f64 {
        let mut s = 0.0;
        for q in &qp.vol {
            let k = q.element;
            let (val, div) = w.vol(q);
            let (vh, dh) = eval_vector(&d.mesh, &d.tab.basis, d.q, wh, k, q.x);
            let e = [val[0] - vh[0], val[1] - vh[1]];
            let ai = inverse2(&d.coeffs.a_k(&d.mesh, k));
            s += q.w * (a_norm_sq(&ai, e) + self.div_k[k] * (div - dh).norm_sqr());
        }
        for fp in &qp.robin {
            let val = w.face(fp);
            let (vh, _) = eval_vector(&d.mesh, &d.tab.basis, d.q, wh, fp.element, fp.x);
            let en = (val[0] - vh[0]) * fp.normal[0] + (val[1] - vh[1]) * fp.normal[1];
            s += fp.w * self.div_f[fp.face] * en.norm_sqr();
        }
        s.max(0.0).sqrt()
    }

    /// Nodal average `J v`, embedded back into broken coefficients.
    pub fn average(&self, d: &Discretization, v: &[C64]) -> Vec<C64> {
        d.spaces.conforming.to_broken(&self.averaging.mul_vec(v))
    }
}

fn a_norm_sq(a: &crate::coeffs::Mat2, e: [C64; 2]) -> f64 {
    let ar = apply2(a, [e[0].re, e[1].re]);
    let ai = apply2(a, [e[0].im, e[1].im]);
    ar[0] * e[0].re + ar[1] * e[1].re + ai[0] * e[0].im + ai[1] * e[1].im
}

/// Energy error of `u_h` against a conforming target `u` by quadrature on `qp`.
pub fn energy_error(d: &Discretization, qp: &QPoints, u: &dyn ScalarTarget, uh: &[C64]) -> EnergyError {
    let gv = d.discrete_gradient(uh);
    let w = d.omega();
    let mut out = EnergyError {
        l2_mu_sq: 0.0,
        robin_sq: 0.0,
        grad_sq: 0.0,
        per_element_sq: vec![0.0; d.mesh.n_triangles()],
        omega: w,
    };
    for q in &qp.vol {
        let k = q.element;
        let (val, grad) = u.vol(q);
        let (vh, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, uh, k, q.x);
        let (gh, _) = eval_vector(&d.mesh, &d.tab.basis, d.q, &gv, k, q.x);
        let m = q.w * d.coeffs.mu_k(&d.mesh, k) * (val - vh).norm_sqr();
        let g = q.w * a_norm_sq(&d.coeffs.a_k(&d.mesh, k), [grad[0] - gh[0], grad[1] - gh[1]]);
        out.l2_mu_sq += m;
        out.grad_sq += g;
        out.per_element_sq[k] += w * w * m + g;
    }
    for fp in &qp.robin {
        let (vh, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, uh, fp.element, fp.x);
        let gamma = d.coeffs.gamma_f(&d.mesh, fp.face).unwrap_or(0.0);
        let r = fp.w * gamma * (u.face(fp) - vh).norm_sqr();
        out.robin_sq += r;
        out.per_element_sq[fp.element] += w * r;
    }
    out
}

/// Nodal averaging of broken fields onto the conforming Lagrange space;
/// nodes on the Dirichlet boundary are dropped (set to zero).
pub fn averaging_matrix(d: &Discretization) -> Result<RealCsr> {
    let cs = &d.spaces.conforming;
    let n = dim(d.p);
    let mut count = vec![0usize; cs.n_nodes];
    for ids in &cs.element_nodes {
        for &g in ids {
            count[g] += 1;
        }
    }
    let mut vals = vec![0.0; d.tab.basis.len()];
    let mut trip = Vec::new();
    for (k, ids) in cs.element_nodes.iter().enumerate() {
        for (a, &g) in ids.iter().enumerate() {
            if let Some(c) = cs.node_dof[g] {
                d.tab.basis.values(lattice_point(cs.lagrange.nodes[a], d.p), &mut vals);
                for i in 0..n {
                    trip.push((c, k * n + i, vals[i] / count[g] as f64));
                }
            }
        }
    }
    RealCsr::from_triplets(cs.ndofs, d.n_broken(), &trip)
}

/// Smallest generalized eigenvalue of `s_h` against `||v - J v||_{dagger,1}^2`
/// on the complement of the conforming space (where both forms vanish).
pub fn coercivity_margin(d: &Discretization, nw: &NormWorkspace) -> Result<f64> {
    let n = d.n_broken();
    if n > DENSE_MARGIN_LIMIT {
        return Err(HelmError::Capability(format!(
            "coercivity margin is computed densely up to {DENSE_MARGIN_LIMIT} dofs, got {n}"
        )));
    }
    let ej = d.spaces.conforming.embed.matmul(&nw.averaging);
    let i_ej = RealCsr::identity(n).sub(&ej);
    let nm = i_ej.transpose().matmul(&nw.dagger1.matmul(&i_ej)).to_dense();
    let s = d.forms.s_h.to_dense();
    let z = complement_basis(&d.spaces.conforming.embed.to_dense())?;
    let zs = z.transpose() * &s * &z;
    let zn = z.transpose() * &nm * &z;
    let ev = generalized_eigenvalues(&zs, &zn)
        .map_err(|e| HelmError::Numerical(format!("coercivity margin: {e}")))?;
    ev.first()
        .copied()
        .ok_or_else(|| HelmError::Numerical("coercivity margin: empty non-conforming complement".into()))
}
