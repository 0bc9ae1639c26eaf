//! Jumps, averages, the lifting, the discrete gradient and the IPDG forms.

use crate::assemble::Assembler;
use crate::basis::{dim, ModalBasis};
use crate::coeffs::CoefficientSet;
use crate::error::{HelmError, Result};
use crate::mesh::{BoundaryKind, FaceKind, Mesh};
use crate::sparse::{ComplexCsr, RealCsr};
use crate::spaces::{eval_broken, make_spaces, Spaces};
use crate::tabulate::{face_sides, Tabulation};
use crate::C64;

/// Choice of the stabilization form `s_h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stabilization {
    /// `sum_F beta_F/h_F ([[u]], [[v]])_F - (A L u, L v)`: recovers the usual SIPG form.
    #[default]
    Lifted,
    /// `sum_F beta_F/h_F ([[u]], [[v]])_F` only.
    PureJump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgOptions {
    pub beta0: f64,
    pub stabilization: Stabilization,
    /// Lift into degree `p + 1` vector fields instead of `p`.
    pub raised_lift: bool,
}

impl Default for DgOptions {
    fn default() -> Self {
        Self { beta0: 10.0, stabilization: Stabilization::Lifted, raised_lift: false }
    }
}

/// Volume source and inhomogeneous boundary data.
pub trait ProblemData: Sync {
    fn source(&self, x: [f64; 2]) -> C64;
    /// `A grad u . n` on Neumann faces.
    fn neumann(&self, _x: [f64; 2], _n: [f64; 2]) -> C64 {
        C64::new(0.0, 0.0)
    }
    /// `A grad u . n - i omega gamma u` on Robin faces.
    fn robin(&self, _x: [f64; 2], _n: [f64; 2]) -> C64 {
        C64::new(0.0, 0.0)
    }
}

/// Sparse matrices of every form on one mesh. Scalar rows/columns index the
/// broken space of degree `p`, vector ones the broken vector space of the
/// lifting degree.
#[derive(Debug, Clone)]
pub struct FormMatrices {
    /// Unweighted scalar mass.
    pub mass: RealCsr,
    pub mass_mu: RealCsr,
    /// `gamma`-weighted Robin trace mass.
    pub robin: RealCsr,
    pub stiffness: RealCsr,
    /// `({{A grad phi_j}} . n_F, [[phi_i]])` over interior and Dirichlet faces.
    pub consistency: RealCsr,
    /// `sum_F beta_F/h_F ([[phi_j]], [[phi_i]])_F`.
    pub penalty: RealCsr,
    /// Unweighted vector mass.
    pub vmass: RealCsr,
    pub mass_a: RealCsr,
    pub lift_rhs: RealCsr,
    /// Coefficients of the lifting (vector x scalar).
    pub lift: RealCsr,
    /// Projected broken gradient (vector x scalar).
    pub grad: RealCsr,
    /// Discrete gradient `grad - lift`.
    pub dgrad: RealCsr,
    pub s_h: RealCsr,
    /// `(A G u, G v) + s_h(u, v)`.
    pub a_h: RealCsr,
    /// Jump presentation `K - C - C^T + penalty (+ lifting term when not cancelled)`.
    pub a_h_jump: RealCsr,
    pub b_h: ComplexCsr,
}

/// A mesh, its coefficients, spaces, tables and assembled forms.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: Mesh,
    pub coeffs: CoefficientSet,
    pub p: usize,
    /// Degree of the vector broken space.
    pub q: usize,
    pub options: DgOptions,
    pub tab: Tabulation,
    /// Higher-order tables for data integrals.
    pub tab_data: Tabulation,
    pub spaces: Spaces,
    pub forms: FormMatrices,
}

/// `beta_F = beta0 p^2 alpha_F`.
pub fn penalty_parameter(mesh: &Mesh, coeffs: &CoefficientSet, beta0: f64, p: usize, f: usize) -> f64 {
    beta0 * (p * p) as f64 * coeffs.alpha_f(mesh, f)
}

impl Discretization {
    pub fn new(mesh: Mesh, coeffs: CoefficientSet, p: usize, options: DgOptions) -> Result<Self> {
        if !(options.beta0 > 0.0 && options.beta0.is_finite()) {
            return Err(HelmError::Input(format!("penalty beta0 must be positive, got {}", options.beta0)));
        }
        coeffs.check_mesh(&mesh)?;
        let q = if options.raised_lift { p + 1 } else { p };
        let spaces = make_spaces(&mesh, p, q)?;
        let tab = Tabulation::new(q, 2 * q + 2, 2 * q + 2)?;
        let tab_data = Tabulation::new(q, 2 * q + 8, 2 * q + 8)?;
        let forms = assemble_forms(&mesh, &coeffs, &tab, p, q, &options)?;
        Ok(Self { mesh, coeffs, p, q, options, tab, tab_data, spaces, forms })
    }

    /// Same mesh and options, other coefficients (e.g. another `omega`).
    pub fn with_coeffs(&self, coeffs: CoefficientSet) -> Result<Self> {
        Self::new(self.mesh.clone(), coeffs, self.p, self.options)
    }

    pub fn omega(&self) -> f64 {
        self.coeffs.omega
    }

    pub fn n_broken(&self) -> usize {
        self.spaces.broken.ndofs()
    }

    pub fn n_vector(&self) -> usize {
        self.spaces.vector.ndofs()
    }

    pub fn assembler<'a>(&'a self, tab: &'a Tabulation) -> Assembler<'a> {
        Assembler { mesh: &self.mesh, coeffs: &self.coeffs, tab, p: self.p, q: self.q }
    }

    pub fn lift(&self, phi: &[C64]) -> Vec<C64> {
        self.forms.lift.mul_vec(phi)
    }

    /// Coefficients of `G(phi) = grad phi - L(phi)` in the vector space.
    pub fn discrete_gradient(&self, phi: &[C64]) -> Vec<C64> {
        self.forms.dgrad.mul_vec(phi)
    }

    /// `(f, phi_i) + (g_N, phi_i)_N + (g_R, phi_i)_R`.
    pub fn load(&self, data: &dyn ProblemData) -> Vec<C64> {
        let tab = &self.tab_data;
        let n = dim(self.p);
        let mut out = vec![C64::new(0.0, 0.0); self.n_broken()];
        for k in 0..self.mesh.n_triangles() {
            let map = self.mesh.element_map(k);
            let jac = map.det.abs();
            for qp in 0..tab.n_vol() {
                let fx = data.source(map.to_physical(tab.vol_pts[qp])) * (tab.vol_w[qp] * jac);
                let v = tab.vol_values(qp);
                for i in 0..n {
                    out[k * n + i] += fx * v[i];
                }
            }
        }
        for (f, face) in self.mesh.faces().iter().enumerate() {
            let kind = match face.kind {
                FaceKind::Boundary(b @ (BoundaryKind::Neumann | BoundaryKind::Robin)) => b,
                _ => continue,
            };
            let side = face_sides(&self.mesh, f)[0];
            for qp in 0..tab.n_edge() {
                let x = self.mesh.face_point(f, tab.edge_t[qp]);
                let g = match kind {
                    BoundaryKind::Neumann => data.neumann(x, face.normal),
                    _ => data.robin(x, face.normal),
                };
                let g = g * (tab.edge_w[qp] * face.length);
                let v = tab.edge_values(side, qp);
                for i in 0..n {
                    out[side.element * n + i] += g * v[i];
                }
            }
        }
        out
    }
}

pub fn assemble_forms(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    tab: &Tabulation,
    p: usize,
    q: usize,
    options: &DgOptions,
) -> Result<FormMatrices> {
    let asm = Assembler { mesh, coeffs, tab, p, q };
    let mass = asm.scalar_mass(|_| 1.0);
    let mass_mu = asm.scalar_mass(|k| coeffs.mu_k(mesh, k));
    let robin = asm.boundary_mass(BoundaryKind::Robin, |f| coeffs.gamma_f(mesh, f).unwrap_or(0.0))?;
    let stiffness = asm.stiffness()?;
    let consistency = asm.consistency()?;
    let penalty = asm.jump_mass(|f| penalty_parameter(mesh, coeffs, options.beta0, p, f) / mesh.face(f).length)?;
    let vmass = asm.vector_mass(|_| [[1.0, 0.0], [0.0, 1.0]])?;
    let mass_a = asm.a_mass()?;
    let lift_rhs = asm.lifting_rhs()?;
    let lift = lift_rhs.scale_rows(&asm.inverse_vector_mass_diag());
    let grad = asm.gradient()?;
    let dgrad = grad.sub(&lift);

    let lal = lift.transpose().matmul(&mass_a.matmul(&lift));
    let s_h = match options.stabilization {
        Stabilization::Lifted => penalty.sub(&lal),
        Stabilization::PureJump => penalty.clone(),
    };
    let a_h = dgrad.transpose().matmul(&mass_a.matmul(&dgrad)).add(&s_h);
    let mut a_h_jump = stiffness.sub(&consistency).sub(&consistency.transpose()).add(&penalty);
    if options.stabilization == Stabilization::PureJump {
        a_h_jump = a_h_jump.add(&lal);
    }
    let w = coeffs.omega;
    let b_h = mass_mu
        .lincomb(-w * w, &a_h, 1.0)
        .to_complex()
        .lincomb(C64::new(1.0, 0.0), &robin.to_complex(), C64::new(0.0, -w));
    Ok(FormMatrices {
        mass,
        mass_mu,
        robin,
        stiffness,
        consistency,
        penalty,
        vmass,
        mass_a,
        lift_rhs,
        lift,
        grad,
        dgrad,
        s_h,
        a_h,
        a_h_jump,
        b_h,
    })
}

fn trace(mesh: &Mesh, basis: &ModalBasis, p: usize, phi: &[C64], k: usize, x: [f64; 2]) -> C64 {
    eval_broken(basis, p, phi, k, mesh.element_map(k).to_reference(x))
}

/// `[[phi]]_F` at face parameter `t`: signed two-sided difference on interior
/// faces, the trace on Dirichlet faces, zero on Neumann and Robin faces.
pub fn jump_at(mesh: &Mesh, basis: &ModalBasis, p: usize, phi: &[C64], f: usize, t: f64) -> C64 {
    let face = mesh.face(f);
    let x = mesh.face_point(f, t);
    match face.kind {
        FaceKind::Interior => (0..2)
            .map(|s| trace(mesh, basis, p, phi, face.owners[s].expect("interior face"), x) * face.sign(s))
            .sum(),
        FaceKind::Boundary(BoundaryKind::Dirichlet) => trace(mesh, basis, p, phi, face.plus(), x),
        FaceKind::Boundary(_) => C64::new(0.0, 0.0),
    }
}

/// `{{w}}_F` at face parameter `t` for a broken vector field of degree `q`.
pub fn average_at(mesh: &Mesh, basis: &ModalBasis, q: usize, w: &[C64], f: usize, t: f64) -> [C64; 2] {
    let face = mesh.face(f);
    let x = mesh.face_point(f, t);
    let n = dim(q);
    let owners: Vec<usize> = face.owners.iter().flatten().copied().collect();
    let weight = 1.0 / owners.len() as f64;
    let mut v = vec![0.0; basis.len()];
    let mut out = [C64::new(0.0, 0.0); 2];
    for k in owners {
        basis.values(mesh.element_map(k).to_reference(x), &mut v);
        for (d, o) in out.iter_mut().enumerate() {
            let base = k * 2 * n + d * n;
            *o += (0..n).map(|i| w[base + i] * v[i]).sum::<C64>() * weight;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{square_sides, uniform_label, unit_square};
    use crate::quadrature::edge_rule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use BoundaryKind::*;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
        (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn random_coeffs(rng: &mut ChaCha8Rng) -> CoefficientSet {
        let a = rng.random_range(0.5..2.0);
        let c = rng.random_range(0.5..2.0);
        let b = rng.random_range(-0.4..0.4);
        CoefficientSet::new(vec![rng.random_range(0.5..2.0)], vec![[[a, b], [b, c]]], vec![rng.random_range(0.5..2.0)], 3.0)
            .unwrap()
    }

    fn mixed_square(n: usize) -> Mesh {
        unit_square(n, &square_sides([Dirichlet, Robin, Neumann, Robin])).unwrap()
    }

    #[test]
    fn indicator_jump() {
        let m = unit_square(1, &uniform_label(Neumann)).unwrap();
        let basis = ModalBasis::new(1).unwrap();
        let n = dim(1);
        // constant 1 on the element with the lower id (n_+ . n_F = +1)
        let mut phi = vec![C64::new(0.0, 0.0); 2 * n];
        let mut probe = vec![0.0; n];
        basis.values([0.2, 0.2], &mut probe);
        phi[0] = C64::new(1.0 / probe[0], 0.0);
        let f = (0..m.faces().len()).find(|&f| m.face(f).is_interior()).unwrap();
        for t in [0.1, 0.5, 0.9] {
            assert!((jump_at(&m, &basis, 1, &phi, f, t) - 1.0).norm() < 1e-12);
        }
        let nf = (0..m.faces().len()).find(|&f| !m.face(f).is_interior() && m.face(f).plus() == 0).unwrap();
        assert_eq!(jump_at(&m, &basis, 1, &phi, nf, 0.5), C64::new(0.0, 0.0));
    }

    #[test]
    fn average_of_constants() {
        let m = unit_square(1, &uniform_label(Dirichlet)).unwrap();
        let basis = ModalBasis::new(1).unwrap();
        let n = dim(1);
        let mut v = vec![0.0; n];
        basis.values([0.3, 0.3], &mut v);
        let one = 1.0 / v[0];
        let mut w = vec![C64::new(0.0, 0.0); 2 * 2 * n];
        w[0] = C64::new(one, 0.0); // (1, 0) on element 0
        w[2 * n + n] = C64::new(one, 0.0); // (0, 1) on element 1
        let fi = (0..m.faces().len()).find(|&f| m.face(f).is_interior()).unwrap();
        let a = average_at(&m, &basis, 1, &w, fi, 0.4);
        assert!((a[0] - 0.5).norm() < 1e-12 && (a[1] - 0.5).norm() < 1e-12);
        let fb = (0..m.faces().len()).find(|&f| m.face(f).owners[0] == Some(0) && !m.face(f).is_interior()).unwrap();
        let a = average_at(&m, &basis, 1, &w, fb, 0.4);
        assert!((a[0] - 1.0).norm() < 1e-12 && a[1].norm() < 1e-12);
    }

    /// `(L phi, w)` against face integrals evaluated pointwise.
    #[test]
    fn lifting_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for p in 1..=2 {
            for raised in [false, true] {
                let opts = DgOptions { raised_lift: raised, ..Default::default() };
                let d = Discretization::new(mixed_square(2), random_coeffs(&mut rng), p, opts).unwrap();
                let rule = edge_rule(2 * d.q + 4).unwrap();
                let phi = random_vec(&mut rng, d.n_broken());
                let lphi = d.lift(&phi);
                let mlphi = d.forms.vmass.mul_vec(&lphi);
                for i in 0..d.n_vector() {
                    let mut w = vec![C64::new(0.0, 0.0); d.n_vector()];
                    w[i] = C64::new(1.0, 0.0);
                    let mut oracle = C64::new(0.0, 0.0);
                    for f in 0..d.mesh.faces().len() {
                        let face = d.mesh.face(f);
                        for (x, wq) in rule.iter() {
                            let j = jump_at(&d.mesh, &d.tab.basis, p, &phi, f, x[0]);
                            let a = average_at(&d.mesh, &d.tab.basis, d.q, &w, f, x[0]);
                            oracle += j * (a[0] * face.normal[0] + a[1] * face.normal[1]) * (wq * face.length);
                        }
                    }
                    assert!((mlphi[i] - oracle).norm() < 1e-11 * (1.0 + oracle.norm()), "p={p} i={i}");
                }
            }
        }
    }

    #[test]
    fn presentations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in 1..=3 {
            let d = Discretization::new(mixed_square(3), random_coeffs(&mut rng), p, DgOptions::default()).unwrap();
            let diff = d.forms.a_h.max_abs_diff(&d.forms.a_h_jump);
            assert!(diff <= 1e-10 * d.forms.a_h.max_abs(), "p={p}: {diff}");
            assert!(d.forms.a_h.hermitian_defect() <= 1e-12 * d.forms.a_h.max_abs());
        }
    }

    #[test]
    fn conforming_fields_are_invisible_to_stabilization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 1..=2 {
            let d = Discretization::new(mixed_square(3), random_coeffs(&mut rng), p, DgOptions::default()).unwrap();
            let e = &d.spaces.conforming.embed;
            let se = d.forms.s_h.matmul(e);
            assert!(se.max_abs() < 1e-11 * d.forms.s_h.max_abs());
            // G = grad on conforming fields and the forms reduce to the stiffness
            let le = d.forms.lift.matmul(e);
            assert!(le.max_abs() < 1e-11);
            let ah = e.transpose().matmul(&d.forms.a_h.matmul(e));
            let k = e.transpose().matmul(&d.forms.stiffness.matmul(e));
            assert!(ah.max_abs_diff(&k) < 1e-10 * k.max_abs());
        }
    }

    #[test]
    fn nonpositive_penalty_is_rejected() {
        let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 1.0).unwrap();
        let opts = DgOptions { beta0: 0.0, ..Default::default() };
        assert!(matches!(Discretization::new(mixed_square(1), c, 1, opts), Err(HelmError::Input(_))));
    }

    #[test]
    fn b_h_is_complex_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = Discretization::new(mixed_square(2), random_coeffs(&mut rng), 2, DgOptions::default()).unwrap();
        let b = &d.forms.b_h;
        assert!(b.max_abs_diff(&b.transpose()) < 1e-12 * b.max_abs());
        assert!(b.hermitian_defect() > 1e-3);
    }
}
