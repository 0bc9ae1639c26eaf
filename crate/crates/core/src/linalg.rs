//! Dense and sparse factorizations used by projections, eigenvalue probes
//! and the linear solves.

use faer::linalg::solvers::Solve;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, Par, Side};

use crate::error::{HelmError, Result};
use crate::sparse::RealCsr;
use crate::C64;

/// Gram systems at most this size are factorized densely.
pub const DENSE_GRAM_LIMIT: usize = 2000;

/// Cholesky factorization of a real symmetric positive definite matrix.
pub enum SpdSolver {
    /// Zero-dimensional system.
    Empty,
    Dense(faer::linalg::solvers::Llt<f64>),
    Sparse(faer::sparse::linalg::solvers::Llt<usize, f64>),
}

impl std::fmt::Debug for SpdSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Empty => write!(f, "SpdSolver::Empty"),
            Self::Dense(_) => write!(f, "SpdSolver::Dense"),
            Self::Sparse(_) => write!(f, "SpdSolver::Sparse"),
        }
    }
}

impl SpdSolver {
    pub fn new(m: &RealCsr, what: &str) -> Result<Self> {
        let n = m.nrows();
        let fail = || HelmError::Numerical(format!("{what}: Gram matrix is not positive definite"));
        if n == 0 {
            Ok(Self::Empty)
        } else if n <= DENSE_GRAM_LIMIT {
            Ok(Self::Dense(m.to_dense().llt(Side::Lower).map_err(|_| fail())?))
        } else {
            Ok(Self::Sparse(m.to_faer()?.sp_cholesky(Side::Lower).map_err(|_| fail())?))
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Self::Empty)
    }

    /// Solves for a complex right-hand side (real and imaginary parts separately).
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = b.len();
        let mut rhs = Mat::<f64>::from_fn(n, 2, |i, j| if j == 0 { b[i].re } else { b[i].im });
        match self {
            Self::Empty => return Vec::new(),
            Self::Dense(l) => l.solve_in_place(rhs.as_mut()),
            Self::Sparse(l) => l.solve_in_place(rhs.as_mut()),
        }
        (0..n).map(|i| C64::new(rhs[(i, 0)], rhs[(i, 1)])).collect()
    }
}

fn cholesky_factor(n: &Mat<f64>) -> Result<Mat<f64>> {
    let llt = n
        .llt(Side::Lower)
        .map_err(|_| HelmError::Numerical("norm matrix is not positive definite".into()))?;
    Ok(llt.L().to_owned())
}

/// `L^{-1} S L^{-T}` where `N = L L^T`.
fn congruence(s: &Mat<f64>, n: &Mat<f64>) -> Result<Mat<f64>> {
    let l = cholesky_factor(n)?;
    let mut c = s.clone();
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), ct.as_mut(), Par::Seq);
    // symmetrize rounding
    Ok(Mat::from_fn(ct.nrows(), ct.ncols(), |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)])))
}

/// Eigenvalues (ascending) of the symmetric pencil `S x = lambda N x`, `N` SPD.
pub fn generalized_eigenvalues(s: &Mat<f64>, n: &Mat<f64>) -> Result<Vec<f64>> {
    if s.nrows() == 0 {
        return Ok(Vec::new());
    }
    congruence(s, n)?
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| HelmError::Numerical(format!("eigensolver failed: {e:?}")))
}

/// Largest eigenvalue of `S x = lambda N x` and an `N`-normalized eigenvector.
pub fn generalized_max_eigenpair(s: &Mat<f64>, n: &Mat<f64>) -> Result<(f64, Vec<f64>)> {
    let l = cholesky_factor(n)?;
    let c = congruence(s, n)?;
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| HelmError::Numerical(format!("eigensolver failed: {e:?}")))?;
    let last = c.nrows() - 1;
    let lam = evd.S().column_vector()[last];
    // x = L^{-T} y
    let mut y = Mat::<f64>::from_fn(c.nrows(), 1, |i, _| evd.U()[(i, last)]);
    faer::linalg::triangular_solve::solve_upper_triangular_in_place(l.transpose(), y.as_mut(), Par::Seq);
    Ok((lam, (0..c.nrows()).map(|i| y[(i, 0)]).collect()))
}

/// Orthonormal basis of the orthogonal complement of the column space of `e`.
pub fn complement_basis(e: &Mat<f64>) -> Result<Mat<f64>> {
    let (rows, cols) = (e.nrows(), e.ncols());
    if cols == 0 {
        return Ok(Mat::identity(rows, rows));
    }
    let svd = e
        .svd()
        .map_err(|e| HelmError::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let tol = s[0] * 1e-10 * rows.max(cols) as f64;
    let rank = (0..cols.min(rows)).filter(|&i| s[i] > tol).count();
    Ok(svd.U().subcols(rank, rows - rank).to_owned())
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalized_pencil() {
        let s = Mat::from_fn(2, 2, |i, j| [[2.0, 0.0], [0.0, 6.0]][i][j]);
        let n = Mat::from_fn(2, 2, |i, j| [[1.0, 0.0], [0.0, 2.0]][i][j]);
        let ev = generalized_eigenvalues(&s, &n).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let (lam, x) = generalized_max_eigenpair(&s, &n).unwrap();
        assert!((lam - 3.0).abs() < 1e-14);
        assert!((2.0 * x[1] * x[1] - 1.0).abs() < 1e-14 && x[0].abs() < 1e-14);
    }

    #[test]
    fn complement_is_orthogonal() {
        let e = Mat::from_fn(4, 2, |i, j| if i == j || i == j + 2 { 1.0 } else { 0.0 });
        let z = complement_basis(&e).unwrap();
        assert_eq!(z.ncols(), 2);
        let p = e.transpose() * &z;
        for i in 0..2 {
            for j in 0..2 {
                assert!(p[(i, j)].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn spd_solver_paths_agree() {
        let n = 5;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, 4.0));
            if i + 1 < n {
                trip.push((i, i + 1, -1.0));
                trip.push((i + 1, i, -1.0));
            }
        }
        let m = RealCsr::from_triplets(n, n, &trip).unwrap();
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let x = SpdSolver::new(&m, "test").unwrap().solve(&b);
        let r = m.mul_vec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).norm() < 1e-13);
        }
        let sparse = SpdSolver::Sparse(m.to_faer().unwrap().sp_cholesky(Side::Lower).unwrap());
        let y = sparse.solve(&b);
        for i in 0..n {
            assert!((x[i] - y[i]).norm() < 1e-13);
        }
    }
}
