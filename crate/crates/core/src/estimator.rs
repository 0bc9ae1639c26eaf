//! Residual a posteriori estimator with per-element contributions, the
//! non-conformity measure and its jump bound, data oscillation, effectivity
//! and reliability bookkeeping, and sampled approximation factors.

use std::fmt::Write as _;

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::{dim, ModalBasis};
use crate::coeffs::{apply2, mesh_scalars};
use crate::dg::{DgOptions, Discretization, ProblemData};
use crate::error::{HelmError, Result};
use crate::linalg::{vec_norm, SpdSolver};
use crate::mesh::{BoundaryKind, FaceKind, Mesh};
use crate::norms::{EnergyError, NormWorkspace};
use crate::quadrature::triangle_rule;
use crate::sampling::{ancestors, on_segment};
use crate::solver::{conforming_matrix, Factorization};
use crate::sparse::RealCsr;
use crate::spaces::legendre01;
use crate::tabulate::face_sides;
use crate::C64;

/// Squared contributions to `eta_K^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementTerms {
    /// `h_K^2/alpha_K ||f + omega^2 mu u_h + div(A grad u_h)||_K^2`.
    pub volume: f64,
    /// `h_K/alpha_K ||[[A grad u_h]] . n||^2` on interior faces of `K`.
    pub flux_jump: f64,
    /// `alpha_K/h_K ||[[u_h]]||^2` on interior faces of `K`.
    pub solution_jump: f64,
    /// `alpha_F/h_F ||u_h||_F^2` on Dirichlet faces of `K`.
    pub dirichlet: f64,
    /// `h_F/alpha_F ||A grad u_h . n - g_N||_F^2` on Neumann faces of `K`.
    pub neumann: f64,
    /// `h_F/alpha_F ||A grad u_h . n - i omega gamma u_h - g_R||_F^2` on Robin faces of `K`.
    pub robin: f64,
}

impl ElementTerms {
    pub const NAMES: [&'static str; 6] = ["volume", "flux_jump", "solution_jump", "dirichlet", "neumann", "robin"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.volume, self.flux_jump, self.solution_jump, self.dirichlet, self.neumann, self.robin]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self { volume: a[0], flux_jump: a[1], solution_jump: a[2], dirichlet: a[3], neumann: a[4], robin: a[5] }
    }

    pub fn eta_sq(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Data oscillation: `local[K] = h_K min_{f_p} ||f - f_p||_{mu,K}` and its
/// vertex-patch aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Oscillation {
    pub local: Vec<f64>,
    pub patch: Vec<f64>,
    /// `(sum_K local[K]^2)^{1/2}`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    pub terms: Vec<ElementTerms>,
    pub eta_k: Vec<f64>,
    pub eta: f64,
    /// `||u_h - J u_h||_{dagger,1}` with `J` the nodal averaging.
    pub rc_surrogate: f64,
    /// `sum_K alpha_K/h_K ||[[u_h]]||^2` over interior and Dirichlet faces.
    pub jump_sum: f64,
    /// `max(1, omega h_F*/vartheta_F*, (omega h_K*/vartheta_K*)^2)`.
    pub jump_prefactor: f64,
    /// `(jump_prefactor * jump_sum)^{1/2}`, the jump bound without its constant.
    pub rc_bound: f64,
    pub osc: Oscillation,
}

const TERM_COLS: usize = 6;
const CSV_HEADER: &str = "element,volume,flux_jump,solution_jump,dirichlet,neumann,robin,eta_k,osc_k,osc_patch";

impl EstimatorReport {
    pub fn n_elements(&self) -> usize {
        self.terms.len()
    }

    pub fn effectivity(&self, error: f64) -> Effectivity {
        Effectivity::new(self.eta, error, 0.0)
    }

    /// Per-element rows plus a `#`-prefixed summary block. Floats use the
    /// shortest representation that reads back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# eta = {}", self.eta);
        let _ = writeln!(s, "# rc_surrogate = {}", self.rc_surrogate);
        let _ = writeln!(s, "# jump_sum = {}", self.jump_sum);
        let _ = writeln!(s, "# jump_prefactor = {}", self.jump_prefactor);
        let _ = writeln!(s, "# rc_bound = {}", self.rc_bound);
        let _ = writeln!(s, "# osc = {}", self.osc.total);
        let _ = writeln!(s, "{CSV_HEADER}");
        for (k, t) in self.terms.iter().enumerate() {
            let _ = write!(s, "{k}");
            for v in t.as_array() {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{},{}", self.eta_k[k], self.osc.local[k], self.osc.patch[k]);
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| HelmError::Parse(format!("estimator report: {m}"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
        let mut summary = std::collections::BTreeMap::new();
        let mut terms = Vec::new();
        let (mut eta_k, mut local, mut patch) = (Vec::new(), Vec::new(), Vec::new());
        let mut seen_header = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                let (k, v) = rest.split_once('=').ok_or_else(|| bad(format!("bad summary line '{line}'")))?;
                summary.insert(k.trim().to_string(), num(v)?);
            } else if !seen_header {
                if line != CSV_HEADER {
                    return Err(bad(format!("unexpected header '{line}'")));
                }
                seen_header = true;
            } else {
                let cols: Vec<&str> = line.split(',').collect();
                if cols.len() != TERM_COLS + 4 {
                    return Err(bad(format!("expected {} columns, got {}", TERM_COLS + 4, cols.len())));
                }
                let id: usize = cols[0].trim().parse().map_err(|_| bad(format!("bad element id '{}'", cols[0])))?;
                if id != terms.len() {
                    return Err(bad(format!("element rows out of order at {id}")));
                }
                let mut a = [0.0; TERM_COLS];
                for (j, slot) in a.iter_mut().enumerate() {
                    *slot = num(cols[1 + j])?;
                }
                terms.push(ElementTerms::from_array(a));
                eta_k.push(num(cols[7])?);
                local.push(num(cols[8])?);
                patch.push(num(cols[9])?);
            }
        }
        let get = |k: &str| summary.get(k).copied().ok_or_else(|| bad(format!("missing summary '{k}'")));
        Ok(Self {
            terms,
            eta_k,
            eta: get("eta")?,
            rc_surrogate: get("rc_surrogate")?,
            jump_sum: get("jump_sum")?,
            jump_prefactor: get("jump_prefactor")?,
            rc_bound: get("rc_bound")?,
            osc: Oscillation { local, patch, total: get("osc")? },
        })
    }
}

/// Residual estimator of `u_h` (broken coefficients) for the given data.
pub fn compute_eta(d: &Discretization, nw: &NormWorkspace, data: &dyn ProblemData, uh: &[C64]) -> Result<EstimatorReport> {
    if uh.len() != d.n_broken() {
        return Err(HelmError::Input(format!(
            "estimator: field has {} coefficients, broken space has {}",
            uh.len(),
            d.n_broken()
        )));
    }
    let mesh = &d.mesh;
    let coeffs = &d.coeffs;
    let tab = &d.tab_data;
    let n = dim(d.p);
    let w = d.omega();
    let nt = mesh.n_triangles();

    let volume: Vec<f64> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let map = mesh.element_map(k);
            let jac = map.det.abs();
            let a = coeffs.a_k(mesh, k);
            let mu = coeffs.mu_k(mesh, k);
            let mut s = 0.0;
            for q in 0..tab.n_vol() {
                let (v, hs) = (tab.vol_values(q), tab.vol_ref_hess(q));
                let mut u = C64::new(0.0, 0.0);
                let mut div = C64::new(0.0, 0.0);
                for i in 0..n {
                    let c = uh[k * n + i];
                    u += c * v[i];
                    let h = map.push_hessian(hs[i]);
                    div += c * (a[0][0] * h[0] + (a[0][1] + a[1][0]) * h[1] + a[1][1] * h[2]);
                }
                let r = data.source(map.to_physical(tab.vol_pts[q])) + u * (w * w * mu) + div;
                s += tab.vol_w[q] * jac * r.norm_sqr();
            }
            mesh.h(k).powi(2) / coeffs.alpha_k(mesh, k) * s
        })
        .collect();

    // (element, slot, value); slot 6 accumulates the jump sum of the R_c bound
    let face_parts: Vec<Vec<(usize, usize, f64)>> = (0..mesh.faces().len())
        .into_par_iter()
        .map(|f| {
            let face = mesh.face(f);
            let sides = face_sides(mesh, f);
            let an: Vec<[f64; 2]> = sides.iter().map(|s| apply2(&coeffs.a_k(mesh, s.element), face.normal)).collect();
            let maps: Vec<_> = sides.iter().map(|s| mesh.element_map(s.element)).collect();
            // value and A grad u . n_F of side `j` at edge point `q`
            let trace = |j: usize, q: usize| {
                let s = sides[j];
                let (v, g) = (tab.edge_values(s, q), tab.edge_ref_grads(s, q));
                let mut u = C64::new(0.0, 0.0);
                let mut fl = C64::new(0.0, 0.0);
                for i in 0..n {
                    let c = uh[s.element * n + i];
                    u += c * v[i];
                    let pg = maps[j].push_gradient(g[i]);
                    fl += c * (pg[0] * an[j][0] + pg[1] * an[j][1]);
                }
                (u, fl)
            };
            let len = face.length;
            let ratio = |k: usize| coeffs.alpha_k(mesh, k) / mesh.h(k);
            let mut out = Vec::with_capacity(3);
            match face.kind {
                FaceKind::Interior => {
                    let (mut sj, mut fj) = (0.0, 0.0);
                    for q in 0..tab.n_edge() {
                        let (u0, f0) = trace(0, q);
                        let (u1, f1) = trace(1, q);
                        let wq = tab.edge_w[q] * len;
                        sj += wq * (u0 * sides[0].sign + u1 * sides[1].sign).norm_sqr();
                        fj += wq * (f0 * sides[0].sign + f1 * sides[1].sign).norm_sqr();
                    }
                    for s in &sides {
                        let k = s.element;
                        let r = ratio(k);
                        out.push((k, 1, fj / r));
                        out.push((k, 2, r * sj));
                        out.push((k, 6, r * sj));
                    }
                }
                FaceKind::Boundary(kind) => {
                    let k = sides[0].element;
                    let af = coeffs.alpha_f(mesh, f);
                    let gamma = coeffs.gamma_f(mesh, f).unwrap_or(0.0);
                    let mut s = 0.0;
                    for q in 0..tab.n_edge() {
                        let (u, fl) = trace(0, q);
                        let x = mesh.face_point(f, tab.edge_t[q]);
                        let r = match kind {
                            BoundaryKind::Dirichlet => u,
                            BoundaryKind::Neumann => fl - data.neumann(x, face.normal),
                            BoundaryKind::Robin => fl - C64::new(0.0, w * gamma) * u - data.robin(x, face.normal),
                        };
                        s += tab.edge_w[q] * len * r.norm_sqr();
                    }
                    match kind {
                        BoundaryKind::Dirichlet => {
                            out.push((k, 3, af / len * s));
                            out.push((k, 6, ratio(k) * s));
                        }
                        BoundaryKind::Neumann => out.push((k, 4, len / af * s)),
                        BoundaryKind::Robin => out.push((k, 5, len / af * s)),
                    }
                }
            }
            out
        })
        .collect();

    let mut acc = vec![[0.0; TERM_COLS + 1]; nt];
    for (k, v) in volume.into_iter().enumerate() {
        acc[k][0] = v;
    }
    for part in face_parts {
        for (k, slot, v) in part {
            acc[k][slot] += v;
        }
    }
    let terms: Vec<ElementTerms> = acc
        .iter()
        .map(|a| ElementTerms::from_array([a[0], a[1], a[2], a[3], a[4], a[5]]))
        .collect();
    let eta_k: Vec<f64> = terms.iter().map(|t| t.eta_sq().sqrt()).collect();
    let eta = terms.iter().map(ElementTerms::eta_sq).sum::<f64>().sqrt();
    let jump_sum: f64 = acc.iter().map(|a| a[6]).sum();
    let jump_prefactor = mesh_scalars(mesh, coeffs).jump_prefactor();

    let nonconf: Vec<C64> = uh.iter().zip(nw.average(d, uh)).map(|(a, b)| a - b).collect();
    let rc_surrogate = nw.dagger1_norm(&nonconf);

    Ok(EstimatorReport {
        terms,
        eta_k,
        eta,
        rc_surrogate,
        jump_sum,
        jump_prefactor,
        rc_bound: (jump_prefactor * jump_sum).sqrt(),
        osc: oscillation(d, &|x| data.source(x)),
    })
}

/// `h_K min_{f_p in P_p(K)} ||f - f_p||_{mu,K}` per element (local `L^2`
/// projection; `mu` is constant per element) and its vertex-patch sums.
pub fn oscillation(d: &Discretization, f: &(dyn Fn([f64; 2]) -> C64 + Sync)) -> Oscillation {
    let mesh = &d.mesh;
    let tab = &d.tab_data;
    let n = dim(d.p);
    let local: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|k| {
            let map = mesh.element_map(k);
            let fx: Vec<C64> = tab.vol_pts.iter().map(|&xi| f(map.to_physical(xi))).collect();
            // the modal basis is orthonormal on the reference triangle
            let mut c = vec![C64::new(0.0, 0.0); n];
            for (q, fq) in fx.iter().enumerate() {
                let v = tab.vol_values(q);
                for i in 0..n {
                    c[i] += fq * (tab.vol_w[q] * v[i]);
                }
            }
            let mut s = 0.0;
            for (q, fq) in fx.iter().enumerate() {
                let v = tab.vol_values(q);
                let proj: C64 = (0..n).map(|i| c[i] * v[i]).sum();
                s += tab.vol_w[q] * (fq - proj).norm_sqr();
            }
            let s = s * map.det.abs() * d.coeffs.mu_k(mesh, k);
            mesh.h(k) * s.max(0.0).sqrt()
        })
        .collect();
    let patch = patch_sums(mesh, &local);
    let total = local.iter().map(|x| x * x).sum::<f64>().sqrt();
    Oscillation { local, patch, total }
}

/// `(sum_{K' in patch(K)} x[K']^2)^{1/2}` over vertex patches.
pub fn patch_sums(mesh: &Mesh, x: &[f64]) -> Vec<f64> {
    let vt = mesh.vertex_triangles();
    (0..mesh.n_triangles())
        .map(|k| {
            let mut ids: Vec<usize> = mesh.triangles()[k].iter().flat_map(|&v| vt[v].iter().copied()).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt()
        })
        .collect()
}

/// Ratio of estimator to error with the conventions for vanishing errors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Effectivity {
    pub value: f64,
    /// Both estimator and error vanish; the value is reported as 1.
    pub degenerate: bool,
}

impl Effectivity {
    /// Values at or below `zero` count as vanishing.
    pub fn new(eta: f64, error: f64, zero: f64) -> Self {
        match (eta <= zero, error <= zero) {
            (true, true) => Self { value: 1.0, degenerate: true },
            (false, true) => Self { value: f64::INFINITY, degenerate: false },
            _ => Self { value: eta / error, degenerate: false },
        }
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.degenerate || (lo..=hi).contains(&self.value)
    }
}

/// `eta_K / (|||u - u_h|||_{omega, patch(K)} + osc_patch(K))`; `local_err_sq`
/// holds the per-element squared energy error.
pub fn efficiency_ratios(mesh: &Mesh, report: &EstimatorReport, local_err_sq: &[f64]) -> Vec<f64> {
    let err: Vec<f64> = local_err_sq.iter().map(|e| e.max(0.0).sqrt()).collect();
    let patch_err = patch_sums(mesh, &err);
    (0..mesh.n_triangles())
        .map(|k| ratio(report.eta_k[k], patch_err[k] + report.osc.patch[k]))
        .collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Ratios whose boundedness is the reliability statement; the proof constants
/// are unknown, so they are compared against a fitted constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityCheck {
    /// `R = (eta^2 + R_c^2)^{1/2}` with `eta` bounding the conforming residual.
    pub residual: f64,
    /// `|||e_h||| / ((1 + gamma_ba^2)^{1/2} R)`.
    pub energy_ratio: f64,
    /// `omega ||e_h||_mu / (gamma_check R)`.
    pub l2_ratio: f64,
    /// `omega^{1/2} ||e_h||_{gamma,Robin} / (gamma_tilde R)`.
    pub robin_ratio: f64,
}

impl ReliabilityCheck {
    pub fn holds(&self, constant: f64) -> bool {
        self.energy_ratio <= constant && self.l2_ratio <= constant && self.robin_ratio <= constant
    }

    /// `eta (1 + gamma_ba^2)^{1/2} / |||e_h|||`.
    pub fn effectivity(error: f64, report: &EstimatorReport, factors: &ApproximationFactors) -> Effectivity {
        Effectivity::new(report.eta * (1.0 + factors.total * factors.total).sqrt(), error, 0.0)
    }
}

pub fn reliability_check(error: &EnergyError, report: &EstimatorReport, factors: &ApproximationFactors) -> ReliabilityCheck {
    let r = report.eta.hypot(report.rc_surrogate);
    let w = error.omega;
    ReliabilityCheck {
        residual: r,
        energy_ratio: ratio(error.energy(), (1.0 + factors.total * factors.total).sqrt() * r),
        l2_ratio: ratio(w * error.l2_mu(), factors.check * r),
        robin_ratio: ratio(w.sqrt() * error.robin(), factors.tilde * r),
    }
}

/// How a maximization was carried out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    Dense,
    Power { iterations: usize, converged: bool },
    /// Empty parameter space (no Robin boundary): the factor is 0.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproximationFactors {
    pub check_g: f64,
    pub check_d: f64,
    pub tilde_g: f64,
    pub tilde_d: f64,
    /// `(4 check_g^2 + 2 tilde_g^2)^{1/2}`.
    pub g: f64,
    pub d: f64,
    /// `(check_g^2 + check_d^2)^{1/2}`.
    pub check: f64,
    pub tilde: f64,
    /// `(g^2 + d^2)^{1/2}`.
    pub total: f64,
    /// Search used for the `[check_g, check_d, tilde_g, tilde_d]` maximizations.
    pub methods: [SearchMethod; 4],
}

impl ApproximationFactors {
    pub fn from_components(check_g: f64, check_d: f64, tilde_g: f64, tilde_d: f64, methods: [SearchMethod; 4]) -> Self {
        let g = (4.0 * check_g * check_g + 2.0 * tilde_g * tilde_g).sqrt();
        let d = (4.0 * check_d * check_d + 2.0 * tilde_d * tilde_d).sqrt();
        Self {
            check_g,
            check_d,
            tilde_g,
            tilde_d,
            g,
            d,
            check: check_g.hypot(check_d),
            tilde: tilde_g.hypot(tilde_d),
            total: g.hypot(d),
            methods,
        }
    }

    /// Whether every power iteration converged.
    pub fn converged(&self) -> bool {
        self.methods
            .iter()
            .all(|m| !matches!(m, SearchMethod::Power { converged: false, .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaOptions {
    /// Parameter spaces up to this size are maximized by a dense eigensolve.
    pub dense_limit: usize,
    /// Relative change of the Rayleigh quotient that stops power iteration.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for GammaOptions {
    fn default() -> Self {
        Self { dense_limit: 1500, tol: 1e-6, max_iter: 200, seed: 0x6a6d_6261 }
    }
}

/// Coefficients on `fine` of broken fields of degree `pc` on `coarse`, where
/// `ancestor` gives the coarse element containing each fine one. Exact when
/// `pf >= pc`.
pub fn prolongation(coarse: &Mesh, fine: &Mesh, ancestor: &[usize], pc: usize, pf: usize) -> Result<RealCsr> {
    let rule = triangle_rule(pc + pf)?;
    let (bc, bf) = (ModalBasis::new(pc)?, ModalBasis::new(pf)?);
    let (nc, nf) = (dim(pc), dim(pf));
    let mut trip = Vec::with_capacity(fine.n_triangles() * nc * nf);
    let (mut vc, mut vf) = (vec![0.0; nc], vec![0.0; nf]);
    for kf in 0..fine.n_triangles() {
        let kc = ancestor[kf];
        let (mf, mc) = (fine.element_map(kf), coarse.element_map(kc));
        let mut block = vec![0.0; nc * nf];
        for (xi, w) in rule.iter() {
            bf.values(xi, &mut vf);
            bc.values(mc.to_reference(mf.to_physical(xi)), &mut vc);
            for j in 0..nf {
                for i in 0..nc {
                    block[j * nc + i] += w * vf[j] * vc[i];
                }
            }
        }
        for j in 0..nf {
            for i in 0..nc {
                trip.push((kf * nf + j, kc * nc + i, block[j * nc + i]));
            }
        }
    }
    RealCsr::from_triplets(fine.n_triangles() * nf, coarse.n_triangles() * nc, &trip)
}

/// Componentwise version of a scalar prolongation for vector layouts.
fn vector_prolongation(ps: &RealCsr, nc: usize, nf: usize) -> Result<RealCsr> {
    let mut trip = Vec::with_capacity(2 * ps.nnz());
    for (r, c, v) in ps.triplets() {
        let (kf, j, kc, i) = (r / nf, r % nf, c / nc, c % nc);
        for d in 0..2 {
            trip.push((kf * 2 * nf + d * nf + j, kc * 2 * nc + d * nc + i, v));
        }
    }
    RealCsr::from_triplets(2 * ps.nrows(), 2 * ps.ncols(), &trip)
}

/// Coarse boundary face containing each fine boundary face (`None` on interior faces).
fn parent_faces(coarse: &Mesh, fine: &Mesh, ancestor: &[usize]) -> Vec<Option<usize>> {
    fine.faces()
        .iter()
        .enumerate()
        .map(|(f, face)| {
            if face.is_interior() {
                return None;
            }
            let x = fine.face_midpoint(f);
            coarse
                .triangle_faces(ancestor[face.plus()])
                .into_iter()
                .find(|&cf| coarse.face(cf).kind == face.kind && on_segment(coarse, cf, x))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Volume,
    Robin,
}

/// Composed dual-solve / projection-defect operators on the working mesh,
/// realized through a conforming reference one uniform refinement finer with
/// degree `p + 1`.
struct DualDefects {
    omega: f64,
    fac: Factorization,
    e_f: RealCsr,
    mass_mu_f: RealCsr,
    /// `mu` of the element of each fine scalar dof.
    mu_dof: Vec<f64>,
    /// Fine scalar -> fine vector coefficients of `A grad`.
    flux: RealCsr,
    p_s: RealCsr,
    /// `(gamma phi_i, Psi_m)_{Robin}` for `gamma`-orthonormal face Legendre `Psi_m`.
    robin_src: RealCsr,
    n_g: RealCsr,
    z_g: RealCsr,
    gram_g: SpdSolver,
    n_v: RealCsr,
    n_s: RealCsr,
    z_v: RealCsr,
    z_s: RealCsr,
    gram_d: SpdSolver,
    /// Metric of the volume parameter (diagonal `mu` mass of the working space).
    volume_metric: Vec<f64>,
}

impl DualDefects {
    fn new(d: &Discretization, nw: &NormWorkspace) -> Result<Self> {
        let coarse = &d.mesh;
        let fine_mesh = coarse.refine_uniform()?;
        let anc = ancestors(&[&fine_mesh]);
        let pf = d.p + 1;
        let fine = Discretization::new(fine_mesh, d.coeffs.clone(), pf, DgOptions { raised_lift: false, ..d.options })?;
        let fm = &fine.mesh;
        let parent = parent_faces(coarse, fm, &anc);
        let asm = fine.assembler(&fine.tab);
        let (nsf, nvf) = (dim(pf), dim(fine.q));

        let p_s = prolongation(coarse, fm, &anc, d.p, pf)?;
        let p_v = vector_prolongation(&prolongation(coarse, fm, &anc, d.q, fine.q)?, dim(d.q), nvf)?;

        let mut a_trip = Vec::new();
        for k in 0..fm.n_triangles() {
            let a = d.coeffs.a_k(fm, k);
            for r in 0..2 {
                for c in 0..2 {
                    for i in 0..nvf {
                        a_trip.push((k * 2 * nvf + r * nvf + i, k * 2 * nvf + c * nvf + i, a[r][c]));
                    }
                }
            }
        }
        let flux = RealCsr::from_triplets(fine.n_vector(), fine.n_vector(), &a_trip)?.matmul(&fine.forms.grad);
        let mu_dof: Vec<f64> = (0..fine.n_broken()).map(|i| d.coeffs.mu_k(fm, i / nsf)).collect();

        let robin_faces: Vec<usize> = (0..coarse.faces().len())
            .filter(|&f| coarse.face(f).kind == FaceKind::Boundary(BoundaryKind::Robin))
            .collect();
        let mut col_of = vec![usize::MAX; coarse.faces().len()];
        for (c, &f) in robin_faces.iter().enumerate() {
            col_of[f] = c;
        }
        let nm = d.p + 1;
        let mut r_trip = Vec::new();
        let tab = &fine.tab_data;
        for (f, face) in fm.faces().iter().enumerate() {
            if face.kind != FaceKind::Boundary(BoundaryKind::Robin) {
                continue;
            }
            let cf = parent[f].ok_or_else(|| HelmError::Structural("fine Robin face has no coarse parent".into()))?;
            let cface = coarse.face(cf);
            let a = coarse.vertices()[cface.vertices[0]];
            let b = coarse.vertices()[cface.vertices[1]];
            let gamma = d.coeffs.gamma_f(coarse, cf).unwrap_or(0.0);
            let scale = 1.0 / (gamma * cface.length).sqrt();
            let side = face_sides(fm, f)[0];
            for q in 0..tab.n_edge() {
                let x = fm.face_point(f, tab.edge_t[q]);
                let t = ((x[0] - a[0]) * (b[0] - a[0]) + (x[1] - a[1]) * (b[1] - a[1])) / (cface.length * cface.length);
                let v = tab.edge_values(side, q);
                let wq = tab.edge_w[q] * face.length * gamma;
                for m in 0..nm {
                    let psi = legendre01(m, t) * scale;
                    for i in 0..nsf {
                        r_trip.push((side.element * nsf + i, col_of[cf] * nm + m, wq * v[i] * psi));
                    }
                }
            }
        }
        let robin_src = RealCsr::from_triplets(fine.n_broken(), robin_faces.len() * nm, &r_trip)?;

        let wf = |f: usize| parent[f].map_or(0.0, |c| nw.w_f[c]);
        let df = |f: usize| parent[f].map_or(0.0, |c| nw.div_f[c]);
        let n_g = asm
            .scalar_mass(|k| nw.w_k[anc[k]])
            .add(&fine.forms.stiffness)
            .add(&asm.boundary_mass(BoundaryKind::Robin, wf)?);
        let z_g = p_s.matmul(&d.spaces.conforming.embed);
        let gram_g = SpdSolver::new(&z_g.transpose().matmul(&n_g.matmul(&z_g)), "reference conforming projection")?;

        let n_v = asm.a_inv_mass()?.add(&asm.boundary_normal_mass(BoundaryKind::Robin, df)?);
        let n_s = asm.scalar_mass(|k| nw.div_k[anc[k]]);
        let inv_mass: Vec<f64> = (0..fine.n_broken()).map(|i| 0.5 / fm.area(i / nsf)).collect();
        let div = asm.divergence_pairing()?.transpose().scale_rows(&inv_mass);
        let z_v = p_v.matmul(&d.spaces.bdm.embed);
        let z_s = div.matmul(&z_v);
        let gram_d = SpdSolver::new(
            &z_v.transpose().matmul(&n_v.matmul(&z_v)).add(&z_s.transpose().matmul(&n_s.matmul(&z_s))),
            "reference BDM projection",
        )?;

        let nc = dim(d.p);
        let volume_metric = (0..d.n_broken())
            .map(|i| d.coeffs.mu_k(coarse, i / nc) * 2.0 * coarse.area(i / nc))
            .collect();
        let fac = Factorization::new(&conforming_matrix(&fine), "reference dual system")?;
        Ok(Self {
            omega: d.omega(),
            fac,
            e_f: fine.spaces.conforming.embed.clone(),
            mass_mu_f: fine.forms.mass_mu.clone(),
            mu_dof,
            flux,
            p_s,
            robin_src,
            n_g,
            z_g,
            gram_g,
            n_v,
            n_s,
            z_v,
            z_s,
            gram_d,
            volume_metric,
        })
    }

    fn dim(&self, src: Source) -> usize {
        match src {
            Source::Volume => self.p_s.ncols(),
            Source::Robin => self.robin_src.ncols(),
        }
    }

    fn metric(&self, src: Source, i: usize) -> f64 {
        match src {
            Source::Volume => self.volume_metric[i],
            Source::Robin => 1.0,
        }
    }

    /// Load functional of the dual problem on fine broken test functions.
    fn source(&self, src: Source, x: &[C64]) -> Vec<C64> {
        match src {
            Source::Volume => scale(&self.mass_mu_f.mul_vec(&self.p_s.mul_vec(x)), self.omega),
            Source::Robin => scale(&self.robin_src.mul_vec(x), self.omega.sqrt()),
        }
    }

    fn source_t(&self, src: Source, y: &[C64]) -> Vec<C64> {
        match src {
            Source::Volume => scale(&self.p_s.tmul_vec(&self.mass_mu_f.mul_vec(y)), self.omega),
            Source::Robin => scale(&self.robin_src.tmul_vec(y), self.omega.sqrt()),
        }
    }

    /// `E B^{-H} E^T l`: the conforming dual solution for load `l`.
    fn dual(&self, l: &[C64]) -> Vec<C64> {
        self.e_f.mul_vec(&self.fac.solve_adjoint(&self.e_f.tmul_vec(l)))
    }

    /// `E B^{-1} E^T y`, the adjoint of [`Self::dual`].
    fn dual_t(&self, y: &[C64]) -> Vec<C64> {
        self.e_f.mul_vec(&self.fac.solve(&self.e_f.tmul_vec(y)))
    }

    fn mu_scaled(&self, v: &[C64], s: f64) -> Vec<C64> {
        v.iter().zip(&self.mu_dof).map(|(x, m)| x * (m * s)).collect()
    }

    /// `S_g x` and `S_d x`, where `x^H S x` is the squared dagger distance of
    /// the dual solution (resp. its flux) to the conforming (resp. BDM) space.
    fn apply(&self, src: Source, x: &[C64], want: [bool; 2]) -> [Vec<C64>; 2] {
        let w = self.omega;
        let u = self.dual(&self.source(src, x));
        let mut out = [Vec::new(), Vec::new()];
        if want[0] {
            let c = self.gram_g.solve(&self.z_g.tmul_vec(&self.n_g.mul_vec(&u)));
            let r = sub(&u, &self.z_g.mul_vec(&c));
            out[0] = self.source_t(src, &self.dual_t(&self.n_g.mul_vec(&r)));
        }
        if want[1] {
            let zv = self.flux.mul_vec(&u);
            let mut zs = self.mu_scaled(&u, -w * w);
            if src == Source::Volume {
                let extra = self.mu_scaled(&self.p_s.mul_vec(x), -w);
                zs.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
            }
            let b: Vec<C64> = self
                .z_v
                .tmul_vec(&self.n_v.mul_vec(&zv))
                .into_iter()
                .zip(self.z_s.tmul_vec(&self.n_s.mul_vec(&zs)))
                .map(|(a, b)| a + b)
                .collect();
            let c = self.gram_d.solve(&b);
            let yv = self.n_v.mul_vec(&sub(&zv, &self.z_v.mul_vec(&c)));
            let ys = self.n_s.mul_vec(&sub(&zs, &self.z_s.mul_vec(&c)));
            let t: Vec<C64> = self
                .flux
                .tmul_vec(&yv)
                .into_iter()
                .zip(self.mu_scaled(&ys, -w * w))
                .map(|(a, b)| a + b)
                .collect();
            let mut sd = self.source_t(src, &self.dual_t(&t));
            if src == Source::Volume {
                let extra = self.p_s.tmul_vec(&self.mu_scaled(&ys, -w));
                sd.iter_mut().zip(extra).for_each(|(a, b)| *a += b);
            }
            out[1] = sd;
        }
        out
    }

    /// Metric-whitened operator `W^{-1/2} S W^{-1/2}`.
    fn apply_whitened(&self, src: Source, x: &[C64], want: [bool; 2]) -> [Vec<C64>; 2] {
        let inv: Vec<f64> = (0..x.len()).map(|i| self.metric(src, i).sqrt().recip()).collect();
        let xs: Vec<C64> = x.iter().zip(&inv).map(|(a, s)| a * s).collect();
        self.apply(src, &xs, want)
            .map(|v| v.iter().zip(&inv).map(|(a, s)| a * s).collect())
    }

    /// Square roots of the largest eigenvalues of the whitened `S_g`, `S_d`.
    fn maximize(&self, src: Source, opts: &GammaOptions) -> Result<[(f64, SearchMethod); 2]> {
        let n = self.dim(src);
        if n == 0 {
            return Ok([(0.0, SearchMethod::Trivial); 2]);
        }
        if n <= opts.dense_limit {
            let cols: Vec<[Vec<C64>; 2]> = (0..n)
                .into_par_iter()
                .map(|j| {
                    let mut e = vec![C64::new(0.0, 0.0); n];
                    e[j] = C64::new(1.0, 0.0);
                    self.apply_whitened(src, &e, [true, true])
                })
                .collect();
            let mut out = [(0.0, SearchMethod::Dense); 2];
            for (b, slot) in out.iter_mut().enumerate() {
                let m = Mat::<C64>::from_fn(n, n, |i, j| 0.5 * (cols[j][b][i] + cols[i][b][j].conj()));
                let ev = m
                    .self_adjoint_eigenvalues(Side::Lower)
                    .map_err(|e| HelmError::Numerical(format!("approximation factor eigensolve failed: {e:?}")))?;
                let top = ev.iter().copied().fold(0.0, f64::max);
                slot.0 = top.max(0.0).sqrt();
            }
            Ok(out)
        } else {
            let mut out = [(0.0, SearchMethod::Trivial); 2];
            for (b, slot) in out.iter_mut().enumerate() {
                *slot = self.power(src, b, n, opts);
            }
            Ok(out)
        }
    }

    fn power(&self, src: Source, branch: usize, n: usize, opts: &GammaOptions) -> (f64, SearchMethod) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(branch as u64));
        let mut x: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let nx = vec_norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let want = [branch == 0, branch == 1];
        let mut lambda = 0.0;
        for it in 1..=opts.max_iter {
            let y = std::mem::take(&mut self.apply_whitened(src, &x, want)[branch]);
            let next: f64 = x.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum();
            let ny = vec_norm(&y);
            let done = (next - lambda).abs() <= opts.tol * next.abs() || ny == 0.0;
            lambda = next;
            if done {
                return (lambda.max(0.0).sqrt(), SearchMethod::Power { iterations: it, converged: true });
            }
            x = y.into_iter().map(|v| v / ny).collect();
        }
        (lambda.max(0.0).sqrt(), SearchMethod::Power { iterations: opts.max_iter, converged: false })
    }
}

fn scale(v: &[C64], s: f64) -> Vec<C64> {
    v.iter().map(|x| x * s).collect()
}

fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Approximation factors maximized over `mu`-normalized broken fields of
/// degree `p` (volume data) and `gamma`-normalized piecewise degree-`p` Robin
/// data, with dual solutions taken from the finer conforming reference.
pub fn sample_gamma_ba(d: &Discretization, nw: &NormWorkspace, opts: &GammaOptions) -> Result<ApproximationFactors> {
    let ops = DualDefects::new(d, nw)?;
    let [(cg, mcg), (cd, mcd)] = ops.maximize(Source::Volume, opts)?;
    let [(tg, mtg), (td, mtd)] = ops.maximize(Source::Robin, opts)?;
    Ok(ApproximationFactors::from_components(cg, cd, tg, td, [mcg, mcd, mtg, mtd]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientSet;
    use crate::manufactured::{CaseKind, Manufactured};
    use crate::mesh::{square_sides, uniform_label, unit_square};
    use crate::quadrature::edge_rule;
    use crate::sampling::eval_scalar;
    use crate::solver::{solve_ipdg, SolveOptions};
    use rand::{Rng, SeedableRng};
    use BoundaryKind::*;

    struct Data;

    impl ProblemData for Data {
        fn source(&self, x: [f64; 2]) -> C64 {
            C64::new(1.0 + x[0] * x[1], x[1].sin())
        }
        fn neumann(&self, x: [f64; 2], _n: [f64; 2]) -> C64 {
            C64::new(x[0], 0.5)
        }
        fn robin(&self, x: [f64; 2], n: [f64; 2]) -> C64 {
            C64::new(n[0] - x[1], x[0])
        }
    }

    fn disc(n: usize, p: usize) -> Discretization {
        let mesh = unit_square(n, &square_sides([Dirichlet, Robin, Neumann, Robin])).unwrap();
        let c = CoefficientSet::new(vec![1.7], vec![[[1.4, 0.2], [0.2, 0.9]]], vec![0.6], 2.3).unwrap();
        Discretization::new(mesh, c, p, DgOptions::default()).unwrap()
    }

    fn random(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn terms_aggregate_and_are_nonnegative() {
        let d = disc(3, 2);
        let nw = NormWorkspace::new(&d).unwrap();
        let rep = compute_eta(&d, &nw, &Data, &random(d.n_broken(), 1)).unwrap();
        let sum: f64 = rep.eta_k.iter().map(|e| e * e).sum();
        assert!((rep.eta * rep.eta - sum).abs() <= 1e-12 * rep.eta * rep.eta);
        assert!(rep.terms.iter().all(|t| t.as_array().iter().all(|&v| v >= 0.0)));
        assert!(rep.rc_surrogate > 0.0 && rep.rc_bound > 0.0);
    }

    /// Every term by direct pointwise evaluation on a two-triangle mesh.
    #[test]
    fn six_terms_match_pointwise_oracle() {
        let d = disc(1, 1);
        let nw = NormWorkspace::new(&d).unwrap();
        let uh = random(d.n_broken(), 7);
        let rep = compute_eta(&d, &nw, &Data, &uh).unwrap();
        let (m, c) = (&d.mesh, &d.coeffs);
        let basis = ModalBasis::new(1).unwrap();
        let w = c.omega;
        let mut oracle = vec![[0.0; 6]; 2];
        let tri = triangle_rule(12).unwrap();
        for k in 0..2 {
            let map = m.element_map(k);
            let mut s = 0.0;
            for (xi, wq) in tri.iter() {
                let x = map.to_physical(xi);
                // P1: the second derivatives vanish
                let (u, _) = eval_scalar(m, &basis, 1, &uh, k, x);
                s += wq * map.det.abs() * (Data.source(x) + u * (w * w * c.mu_k(m, k))).norm_sqr();
            }
            oracle[k][0] = m.h(k).powi(2) / c.alpha_k(m, k) * s;
        }
        let edge = edge_rule(12).unwrap();
        for (f, face) in m.faces().iter().enumerate() {
            let owners: Vec<usize> = face.owners.iter().flatten().copied().collect();
            let mut sums = [0.0; 2];
            for (t, wq) in edge.iter() {
                let x = m.face_point(f, t[0]);
                let vals: Vec<(C64, C64)> = owners
                    .iter()
                    .map(|&k| {
                        let (u, g) = eval_scalar(m, &basis, 1, &uh, k, x);
                        let an = apply2(&c.a_k(m, k), face.normal);
                        (u, g[0] * an[0] + g[1] * an[1])
                    })
                    .collect();
                let wl = wq * face.length;
                match face.kind {
                    FaceKind::Interior => {
                        sums[0] += wl * (vals[0].0 - vals[1].0).norm_sqr();
                        sums[1] += wl * (vals[0].1 - vals[1].1).norm_sqr();
                    }
                    FaceKind::Boundary(Dirichlet) => sums[0] += wl * vals[0].0.norm_sqr(),
                    FaceKind::Boundary(Neumann) => sums[0] += wl * (vals[0].1 - Data.neumann(x, face.normal)).norm_sqr(),
                    FaceKind::Boundary(Robin) => {
                        let g = c.gamma_f(m, f).unwrap();
                        let r = vals[0].1 - C64::new(0.0, w * g) * vals[0].0 - Data.robin(x, face.normal);
                        sums[0] += wl * r.norm_sqr();
                    }
                }
            }
            let af = c.alpha_f(m, f);
            let hf = face.length;
            for &k in &owners {
                let (ak, hk) = (c.alpha_k(m, k), m.h(k));
                match face.kind {
                    FaceKind::Interior => {
                        oracle[k][1] += hk / ak * sums[1];
                        oracle[k][2] += ak / hk * sums[0];
                    }
                    FaceKind::Boundary(Dirichlet) => oracle[k][3] += af / hf * sums[0],
                    FaceKind::Boundary(Neumann) => oracle[k][4] += hf / af * sums[0],
                    FaceKind::Boundary(Robin) => oracle[k][5] += hf / af * sums[0],
                }
            }
        }
        for k in 0..2 {
            let got = rep.terms[k].as_array();
            for j in 0..6 {
                assert!((got[j] - oracle[k][j]).abs() <= 1e-11 * (1.0 + oracle[k][j]), "element {k} term {j}: {} vs {}", got[j], oracle[k][j]);
            }
        }
        for j in 0..6 {
            assert!(rep.terms.iter().any(|t| t.as_array()[j] > 0.0), "term {j} is exercised");
        }
    }

    #[test]
    fn exact_polynomial_solution_has_vanishing_estimator() {
        let c = CoefficientSet::new(vec![1.2], vec![[[1.3, 0.4], [0.4, 0.7]]], vec![0.8], 1.9).unwrap();
        let case = Manufactured::new(CaseKind::Quadratic, &c).unwrap();
        let d = Discretization::new(case.default_mesh(2).unwrap(), c, 2, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        let uh = solve_ipdg(&d, &case, &SolveOptions::default()).unwrap().x;
        let rep = compute_eta(&d, &nw, &case, &uh).unwrap();
        assert!(rep.eta <= 1e-9, "eta = {}", rep.eta);
        assert!(rep.osc.total <= 1e-11);
        let eff = rep.effectivity(0.0);
        assert!(eff.degenerate || eff.value.is_infinite());
        assert_eq!(Effectivity::new(rep.eta, 0.0, 1e-9), Effectivity { value: 1.0, degenerate: true });
    }

    #[test]
    fn conforming_fields_have_no_jump_terms() {
        let d = disc(3, 2);
        let nw = NormWorkspace::new(&d).unwrap();
        let uh = d.spaces.conforming.to_broken(&random(d.spaces.conforming.ndofs, 3));
        let rep = compute_eta(&d, &nw, &Data, &uh).unwrap();
        let scale = rep.eta * rep.eta;
        for t in &rep.terms {
            assert!(t.solution_jump <= 1e-22 * scale && t.dirichlet <= 1e-22 * scale);
        }
        assert!(rep.jump_sum <= 1e-22 * scale);
        assert!(rep.rc_surrogate <= 1e-11 * rep.eta);
    }

    #[test]
    fn report_round_trips_through_csv() {
        let d = disc(2, 1);
        let nw = NormWorkspace::new(&d).unwrap();
        let rep = compute_eta(&d, &nw, &Data, &random(d.n_broken(), 5)).unwrap();
        assert_eq!(EstimatorReport::from_csv(&rep.to_csv()).unwrap(), rep);
    }

    #[test]
    fn oscillation_of_piecewise_polynomials_vanishes() {
        let d = disc(3, 2);
        let osc = oscillation(&d, &|x| C64::new(x[0] * x[1] - 2.0 * x[1] * x[1], x[0]));
        assert!(osc.total <= 1e-11);
        let osc = oscillation(&d, &|x| C64::new((10.0 * x[0]).sin(), 0.0));
        assert!(osc.total > 1e-4);
        assert!(osc.patch.iter().zip(&osc.local).all(|(p, l)| p >= l));
    }

    #[test]
    fn effectivity_conventions() {
        assert_eq!(Effectivity::new(0.0, 0.0, 0.0), Effectivity { value: 1.0, degenerate: true });
        assert!(Effectivity::new(1.0, 0.0, 0.0).value.is_infinite());
        let e = Effectivity::new(3.0, 2.0, 0.0);
        assert_eq!(e.value, 1.5);
        assert!(e.within(1.0, 2.0) && !e.within(2.0, 3.0));
    }

    #[test]
    fn prolongation_reproduces_coarse_fields() {
        let coarse = unit_square(2, &uniform_label(Robin)).unwrap();
        let fine = coarse.refine_uniform().unwrap();
        let anc = ancestors(&[&fine]);
        let p = prolongation(&coarse, &fine, &anc, 2, 3).unwrap();
        let u = random(coarse.n_triangles() * dim(2), 11);
        let uf = p.mul_vec(&u);
        let (bc, bf) = (ModalBasis::new(2).unwrap(), ModalBasis::new(3).unwrap());
        for kf in 0..fine.n_triangles() {
            let x = fine.centroid(kf);
            let a = eval_scalar(&coarse, &bc, 2, &u, anc[kf], x).0;
            let b = eval_scalar(&fine, &bf, 3, &uf, kf, x).0;
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn reference_grams_match_working_grams() {
        let d = disc(2, 1);
        let nw = NormWorkspace::new(&d).unwrap();
        let ops = DualDefects::new(&d, &nw).unwrap();
        let e = &d.spaces.conforming.embed;
        let coarse = e.transpose().matmul(&nw.dagger1.matmul(e));
        let fine = ops.z_g.transpose().matmul(&ops.n_g.matmul(&ops.z_g));
        assert!(coarse.max_abs_diff(&fine) <= 1e-11 * coarse.max_abs());
        let ed = &d.spaces.bdm.embed;
        let coarse = ed.transpose().matmul(&nw.daggerdiv.matmul(ed));
        let fine = ops
            .z_v
            .transpose()
            .matmul(&ops.n_v.matmul(&ops.z_v))
            .add(&ops.z_s.transpose().matmul(&ops.n_s.matmul(&ops.z_s)));
        assert!(coarse.max_abs_diff(&fine) <= 1e-11 * coarse.max_abs());
    }

    #[test]
    fn dense_and_power_searches_agree() {
        let d = disc(2, 1);
        let nw = NormWorkspace::new(&d).unwrap();
        let dense = sample_gamma_ba(&d, &nw, &GammaOptions::default()).unwrap();
        let power = sample_gamma_ba(&d, &nw, &GammaOptions { dense_limit: 0, tol: 1e-12, max_iter: 2000, ..Default::default() }).unwrap();
        assert!(dense.check_g > 0.0 && dense.check_d > 0.0 && dense.tilde_g > 0.0 && dense.tilde_d > 0.0);
        for (a, b) in [(dense.check_g, power.check_g), (dense.check_d, power.check_d), (dense.tilde_g, power.tilde_g), (dense.tilde_d, power.tilde_d)] {
            assert!((a - b).abs() <= 1e-4 * a, "{a} vs {b}");
        }
        let f = dense;
        assert!((f.total * f.total - (4.0 * f.check * f.check + 2.0 * f.tilde * f.tilde)).abs() <= 1e-14 * f.total * f.total);
    }

    /// The maximizing quotient is attained: `x^H S x` equals the squared dagger
    /// distance computed from the dual solution directly.
    #[test]
    fn defect_operator_is_the_squared_distance() {
        let d = disc(2, 1);
        let nw = NormWorkspace::new(&d).unwrap();
        let ops = DualDefects::new(&d, &nw).unwrap();
        let psi = random(d.n_broken(), 21);
        let [sg, _] = ops.apply(Source::Volume, &psi, [true, false]);
        let quad: C64 = psi.iter().zip(&sg).map(|(a, b)| a.conj() * b).sum();
        let u = ops.dual(&ops.source(Source::Volume, &psi));
        let c = ops.gram_g.solve(&ops.z_g.tmul_vec(&ops.n_g.mul_vec(&u)));
        let r = sub(&u, &ops.z_g.mul_vec(&c));
        let direct = ops.n_g.quad(&r);
        assert!((quad.re - direct).abs() <= 1e-10 * direct && quad.im.abs() <= 1e-10 * direct);
    }

    #[test]
    fn no_robin_boundary_gives_zero_tilde_factors() {
        let mesh = unit_square(2, &uniform_label(Dirichlet)).unwrap();
        let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 3.0).unwrap();
        let d = Discretization::new(mesh, c, 1, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        let f = sample_gamma_ba(&d, &nw, &GammaOptions::default()).unwrap();
        assert_eq!((f.tilde_g, f.tilde_d), (0.0, 0.0));
        assert_eq!(f.methods[2], SearchMethod::Trivial);
        assert!(f.check_g > 0.0 && f.check_d > 0.0);
    }
}
