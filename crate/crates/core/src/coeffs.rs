//! Piecewise-constant coefficients and the derived local scales.

use crate::error::{HelmError, Result};
use crate::mesh::{BoundaryKind, FaceKind, Mesh};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    /// `mu_P` per region.
    pub mu: Vec<f64>,
    /// Symmetric positive definite `A_P` per region.
    pub a: Vec<Mat2>,
    /// `gamma_Q` per Robin patch.
    pub gamma: Vec<f64>,
    pub omega: f64,
}

fn min_eig(a: &Mat2) -> f64 {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}

pub fn inverse2(a: &Mat2) -> Mat2 {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
}

pub fn apply2(a: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

impl CoefficientSet {
    pub fn new(mu: Vec<f64>, a: Vec<Mat2>, gamma: Vec<f64>, omega: f64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(HelmError::Input(format!("omega must be positive, got {omega}")));
        }
        if mu.is_empty() || mu.len() != a.len() {
            return Err(HelmError::Input("need one mu and one A per region".into()));
        }
        if let Some(m) = mu.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(HelmError::Input(format!("mu must be positive, got {m}")));
        }
        for (r, m) in a.iter().enumerate() {
            if (m[0][1] - m[1][0]).abs() > 1e-14 * (m[0][1].abs() + m[1][0].abs()).max(1.0) {
                return Err(HelmError::Input(format!("A on region {r} is not symmetric")));
            }
            if !(min_eig(m) > 0.0) {
                return Err(HelmError::Input(format!("A on region {r} is not positive definite")));
            }
        }
        if let Some(g) = gamma.iter().find(|g| !(**g > 0.0 && g.is_finite())) {
            return Err(HelmError::Input(format!("gamma must be positive, got {g}")));
        }
        Ok(Self { mu, a, gamma, omega })
    }

    /// One region with `A = alpha I`, one Robin patch.
    pub fn homogeneous(mu: f64, alpha: f64, gamma: f64, omega: f64) -> Result<Self> {
        Self::new(vec![mu], vec![[[alpha, 0.0], [0.0, alpha]]], vec![gamma], omega)
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.mu.clone(), self.a.clone(), self.gamma.clone(), omega)
    }

    /// Checks that every region and Robin patch of `mesh` has coefficients.
    pub fn check_mesh(&self, mesh: &Mesh) -> Result<()> {
        if let Some(&r) = mesh.regions().iter().find(|&&r| r >= self.mu.len()) {
            return Err(HelmError::Specification(format!("no coefficients for region {r}")));
        }
        if let Some(q) = mesh.robin_patches().into_iter().find(|&q| q >= self.gamma.len()) {
            return Err(HelmError::Specification(format!("no gamma for Robin patch {q}")));
        }
        Ok(())
    }

    pub fn mu_k(&self, mesh: &Mesh, k: usize) -> f64 {
        self.mu[mesh.region(k)]
    }

    pub fn a_k(&self, mesh: &Mesh, k: usize) -> Mat2 {
        self.a[mesh.region(k)]
    }

    /// Smallest eigenvalue of `A` on `K`.
    pub fn alpha_k(&self, mesh: &Mesh, k: usize) -> f64 {
        min_eig(&self.a[mesh.region(k)])
    }

    /// `vartheta_K = sqrt(alpha_K / mu_K)`.
    pub fn theta_k(&self, mesh: &Mesh, k: usize) -> f64 {
        (self.alpha_k(mesh, k) / self.mu_k(mesh, k)).sqrt()
    }

    /// Owner's `alpha` on exterior faces, the larger neighbour on interior ones.
    pub fn alpha_f(&self, mesh: &Mesh, f: usize) -> f64 {
        let face = mesh.face(f);
        face.owners
            .iter()
            .flatten()
            .map(|&k| self.alpha_k(mesh, k))
            .fold(0.0, f64::max)
    }

    /// `gamma_F` on Robin faces, `None` elsewhere.
    pub fn gamma_f(&self, mesh: &Mesh, f: usize) -> Option<f64> {
        mesh.face(f).patch.map(|q| self.gamma[q])
    }

    /// `vartheta_F = alpha_F / gamma_F` on Robin faces.
    pub fn theta_f(&self, mesh: &Mesh, f: usize) -> Option<f64> {
        self.gamma_f(mesh, f).map(|g| self.alpha_f(mesh, f) / g)
    }
}

#[derive(Debug, Clone)]
pub struct MeshScalars {
    pub h: f64,
    pub kappa: f64,
    pub h_k: Vec<f64>,
    /// `omega h_K / vartheta_K` per element.
    pub omega_h_k: Vec<f64>,
    /// `(face, omega h_F / vartheta_F)` for every Robin face.
    pub omega_h_f: Vec<(usize, f64)>,
    pub omega_h_k_star: f64,
    /// `None` when there is no Robin boundary.
    pub omega_h_f_star: Option<f64>,
}

impl MeshScalars {
    /// `max(1, omega h_F*/vartheta_F*, (omega h_K*/vartheta_K*)^2)`; an absent
    /// Robin maximum contributes nothing.
    pub fn jump_prefactor(&self) -> f64 {
        1f64.max(self.omega_h_f_star.unwrap_or(0.0))
            .max(self.omega_h_k_star * self.omega_h_k_star)
    }
}

pub fn mesh_scalars(mesh: &Mesh, coeffs: &CoefficientSet) -> MeshScalars {
    let n = mesh.n_triangles();
    let h_k: Vec<f64> = (0..n).map(|k| mesh.h(k)).collect();
    let omega_h_k: Vec<f64> = (0..n)
        .map(|k| coeffs.omega * h_k[k] / coeffs.theta_k(mesh, k))
        .collect();
    let omega_h_f: Vec<(usize, f64)> = mesh
        .faces()
        .iter()
        .enumerate()
        .filter(|(_, f)| f.kind == FaceKind::Boundary(BoundaryKind::Robin))
        .map(|(i, f)| (i, coeffs.omega * f.length / coeffs.theta_f(mesh, i).expect("Robin face")))
        .collect();
    MeshScalars {
        h: mesh.h_max(),
        kappa: mesh.kappa_max(),
        omega_h_k_star: omega_h_k.iter().copied().fold(0.0, f64::max),
        omega_h_f_star: omega_h_f.iter().map(|x| x.1).reduce(f64::max),
        h_k,
        omega_h_k,
        omega_h_f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{square_sides, uniform_label, unit_square};
    use BoundaryKind::*;

    #[test]
    fn derived_quantities() {
        let c = CoefficientSet::new(vec![4.0], vec![[[2.0, 1.0], [1.0, 2.0]]], vec![0.5], 3.0).unwrap();
        let m = unit_square(2, &square_sides([Robin, Neumann, Neumann, Neumann])).unwrap();
        assert!((c.alpha_k(&m, 0) - 1.0).abs() < 1e-15);
        assert!((c.theta_k(&m, 0) - 0.5).abs() < 1e-15);
        let robin = (0..m.faces().len()).find(|&f| m.face(f).patch.is_some()).unwrap();
        assert!((c.theta_f(&m, robin).unwrap() - 2.0).abs() < 1e-15);
        let s = mesh_scalars(&m, &c);
        assert!((s.omega_h_k_star - 3.0 * (0.5f64 * 2f64.sqrt()) / 0.5).abs() < 1e-14);
        assert!((s.omega_h_f_star.unwrap() - 3.0 * 0.5 / 2.0).abs() < 1e-14);
    }

    #[test]
    fn empty_robin_max_is_absent() {
        let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 0.1).unwrap();
        let m = unit_square(2, &uniform_label(Dirichlet)).unwrap();
        let s = mesh_scalars(&m, &c);
        assert!(s.omega_h_f_star.is_none());
        assert_eq!(s.jump_prefactor(), 1.0);
    }

    #[test]
    fn uniform_refinement_halves_h() {
        let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 1.0).unwrap();
        let m = unit_square(3, &uniform_label(Neumann)).unwrap();
        let r = m.refine_uniform().unwrap();
        assert!((mesh_scalars(&r, &c).h - 0.5 * mesh_scalars(&m, &c).h).abs() < 1e-15);
        assert!(r.kappa_max() <= m.kappa_max() * (1.0 + 1e-12));
    }

    #[test]
    fn invalid_coefficients_are_rejected() {
        assert!(CoefficientSet::homogeneous(-1.0, 1.0, 1.0, 1.0).is_err());
        assert!(CoefficientSet::homogeneous(1.0, 1.0, 1.0, 0.0).is_err());
        assert!(CoefficientSet::new(vec![1.0], vec![[[1.0, 2.0], [2.0, 1.0]]], vec![], 1.0).is_err());
        let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 1.0).unwrap();
        let m = unit_square(1, &uniform_label(Robin)).unwrap();
        assert!(c.check_mesh(&m).is_ok());
        let c = CoefficientSet::new(vec![1.0], vec![[[1.0, 0.0], [0.0, 1.0]]], vec![], 1.0).unwrap();
        assert!(matches!(c.check_mesh(&m), Err(HelmError::Specification(_))));
    }
}
