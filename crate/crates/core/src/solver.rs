//! Sparse direct solves of the IPDG and conforming problems, dual problems
//! and the discrete inf-sup probe.

use faer::linalg::solvers::SolveCore;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Conj, Mat, Par, Side};

use crate::dg::{Discretization, ProblemData};
use crate::error::{HelmError, Result};
use crate::linalg::vec_norm;
use crate::sparse::{ComplexCsr, RealCsr};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative residual above which a solve is rejected.
    pub residual_tol: f64,
    /// Condition estimate above which the system is reported near-singular.
    pub condition_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { residual_tol: 1e-10, condition_limit: 1e12 }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<C64>,
    pub relative_residual: f64,
    /// 1-norm condition estimate.
    pub condition: f64,
}

/// Sparse LU factors of a complex matrix.
pub struct Factorization {
    lu: faer::sparse::linalg::solvers::Lu<usize, C64>,
    n: usize,
    norm1: f64,
}

fn norm1(a: &ComplexCsr) -> f64 {
    let mut col = vec![0.0; a.ncols()];
    for (_, j, v) in a.triplets() {
        col[j] += v.norm();
    }
    col.into_iter().fold(0.0, f64::max)
}

impl Factorization {
    pub fn new(a: &ComplexCsr, context: &str) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(HelmError::Input(format!("{context}: matrix is not square")));
        }
        let lu = a.to_faer()?.sp_lu().map_err(|_| HelmError::NearSingular {
            condition: f64::INFINITY,
            context: context.to_string(),
        })?;
        Ok(Self { lu, n: a.nrows(), norm1: norm1(a) })
    }

    fn apply(&self, b: &[C64], adjoint: bool) -> Vec<C64> {
        let mut m = Mat::<C64>::from_fn(self.n, 1, |i, _| b[i]);
        if adjoint {
            self.lu.solve_transpose_in_place_with_conj(Conj::Yes, m.as_mut());
        } else {
            self.lu.solve_in_place_with_conj(Conj::No, m.as_mut());
        }
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        self.apply(b, false)
    }

    /// Solves `A^H x = b`.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        self.apply(b, true)
    }

    /// Hager--Higham estimate of `||A||_1 ||A^{-1}||_1`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let one = |v: &[C64]| v.iter().map(|z| z.norm()).sum::<f64>();
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0f64;
        let mut last = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = est.max(one(&y));
            let xi: Vec<C64> = y
                .iter()
                .map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) })
                .collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last {
                break;
            }
            last = j;
            x = vec![C64::new(0.0, 0.0); n];
            x[j] = C64::new(1.0, 0.0);
        }
        // alternating test vector guards against the classical failure cases
        let alt: Vec<C64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let alt_est = 2.0 * one(&self.solve(&alt)) / (3.0 * n as f64);
        est.max(alt_est) * self.norm1
    }
}

/// Factorizes, solves, checks the residual and the condition estimate.
pub fn solve_checked(a: &ComplexCsr, b: &[C64], opts: &SolveOptions, context: &str) -> Result<Solution> {
    let fac = Factorization::new(a, context)?;
    let condition = fac.condition_estimate();
    if !(condition <= opts.condition_limit) {
        return Err(HelmError::NearSingular { condition, context: context.to_string() });
    }
    let x = fac.solve(b);
    let r: Vec<C64> = a.mul_vec(&x).iter().zip(b).map(|(ax, bi)| ax - bi).collect();
    let scale = vec_norm(b).max(f64::MIN_POSITIVE);
    let relative_residual = if vec_norm(b) == 0.0 { vec_norm(&r) } else { vec_norm(&r) / scale };
    // a backward-stable LU only misses the residual through pivot growth,
    // i.e. when the estimate above has undershot a nearly singular matrix
    if !(relative_residual <= opts.residual_tol) {
        return Err(HelmError::NearSingular {
            condition,
            context: format!("{context}: relative residual {relative_residual:.3e} exceeds {:.1e}", opts.residual_tol),
        });
    }
    Ok(Solution { x, relative_residual, condition })
}

/// `b_h(u_h, v) = (f, v)` on the broken space.
pub fn solve_ipdg(d: &Discretization, data: &dyn ProblemData, opts: &SolveOptions) -> Result<Solution> {
    solve_checked(&d.forms.b_h, &d.load(data), opts, "IPDG system")
}

/// `b` restricted to the conforming space (`E^T b_h E`).
pub fn conforming_matrix(d: &Discretization) -> ComplexCsr {
    let e = d.spaces.conforming.embed.to_complex();
    e.transpose().matmul(&d.forms.b_h.matmul(&e))
}

fn require_conforming(d: &Discretization) -> Result<()> {
    if d.spaces.conforming.ndofs == 0 {
        return Err(HelmError::Input("conforming space is trivial".into()));
    }
    Ok(())
}

/// Conforming solution of `b(u, v) = (f, v)`, returned in broken coefficients.
pub fn solve_conforming(d: &Discretization, data: &dyn ProblemData, opts: &SolveOptions) -> Result<Solution> {
    require_conforming(d)?;
    let e = &d.spaces.conforming.embed;
    let rhs = e.tmul_vec(&d.load(data));
    let mut s = solve_checked(&conforming_matrix(d), &rhs, opts, "conforming system")?;
    s.x = e.mul_vec(&s.x);
    Ok(s)
}

/// Right-hand side of a dual problem, as a functional on broken test functions.
#[derive(Debug, Clone)]
pub enum DualSource {
    /// `b(w, u*) = omega (mu w, psi)` with `psi` in broken coefficients.
    Volume(Vec<C64>),
    /// `b(w, U*) = omega^{1/2} (gamma w, Psi)_{Robin}` with `Psi` in broken coefficients.
    Robin(Vec<C64>),
}

/// Batch solver of conforming dual problems `b(w, u*) = l(w)` sharing one factorization.
pub struct DualSolver {
    fac: Factorization,
    matrix: ComplexCsr,
    embed: RealCsr,
    mass_mu: RealCsr,
    robin: RealCsr,
    omega: f64,
    has_robin: bool,
    condition: f64,
    opts: SolveOptions,
}

impl DualSolver {
    pub fn new(d: &Discretization, opts: &SolveOptions) -> Result<Self> {
        require_conforming(d)?;
        let matrix = conforming_matrix(d).conj_transpose();
        let fac = Factorization::new(&matrix, "dual system")?;
        let condition = fac.condition_estimate();
        if !(condition <= opts.condition_limit) {
            return Err(HelmError::NearSingular { condition, context: "dual system".into() });
        }
        Ok(Self {
            fac,
            condition,
            matrix,
            embed: d.spaces.conforming.embed.clone(),
            mass_mu: d.forms.mass_mu.clone(),
            robin: d.forms.robin.clone(),
            omega: d.omega(),
            has_robin: d.forms.robin.nnz() > 0,
            opts: *opts,
        })
    }

    /// Dual solution in broken coefficients.
    pub fn solve(&self, src: &DualSource) -> Result<Vec<C64>> {
        let rhs = match src {
            DualSource::Volume(psi) => self.mass_mu.mul_vec(psi).iter().map(|v| v * self.omega).collect::<Vec<_>>(),
            DualSource::Robin(psi) => {
                if !self.has_robin {
                    return Err(HelmError::Input("Robin dual problems need a Robin boundary".into()));
                }
                self.robin.mul_vec(psi).iter().map(|v| v * self.omega.sqrt()).collect()
            }
        };
        let rhs = self.embed.tmul_vec(&rhs);
        let x = self.fac.solve(&rhs);
        let r: Vec<C64> = self.matrix.mul_vec(&x).iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let scale = vec_norm(&rhs);
        if scale > 0.0 && vec_norm(&r) > self.opts.residual_tol * scale {
            return Err(HelmError::NearSingular {
                condition: self.condition,
                context: "dual system: residual check failed".into(),
            });
        }
        Ok(self.embed.mul_vec(&x))
    }
}

/// Smallest singular value of the conforming `b` matrix normalized by the
/// conforming energy Gram matrix: a discrete inf-sup constant.
pub fn stability_probe(d: &Discretization) -> Result<f64> {
    require_conforming(d)?;
    let n = d.spaces.conforming.ndofs;
    if n > crate::linalg::DENSE_GRAM_LIMIT {
        return Err(HelmError::Capability(format!("stability probe is dense; {n} conforming dofs is too many")));
    }
    let e = &d.spaces.conforming.embed;
    let w = d.omega();
    let energy = d
        .forms
        .mass_mu
        .lincomb(w * w, &d.forms.robin, w)
        .add(&d.forms.stiffness);
    let gram = e.transpose().matmul(&energy.matmul(e)).to_dense();
    let l = gram
        .llt(Side::Lower)
        .map_err(|_| HelmError::Numerical("energy Gram matrix is not positive definite".into()))?
        .L()
        .to_owned();
    let lc = Mat::<C64>::from_fn(n, n, |i, j| C64::new(l[(i, j)], 0.0));
    let mut c = conforming_matrix(d).to_dense();
    solve_lower_triangular_in_place(lc.as_ref(), c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    solve_lower_triangular_in_place(lc.as_ref(), ct.as_mut(), Par::Seq);
    let s = ct
        .singular_values()
        .map_err(|e| HelmError::Numerical(format!("stability probe SVD failed: {e:?}")))?;
    Ok(s.last().copied().unwrap_or(0.0))
}
