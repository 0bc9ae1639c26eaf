//! Interior penalty discontinuous Galerkin discretization of the heterogeneous
//! Helmholtz problem
//!
//! ```text
//! -omega^2 mu u - div(A grad u) = f   in Omega
//!                               u = 0 on Gamma_D
//!                    A grad u . n = 0 on Gamma_N
//!       A grad u . n - i omega gamma u = 0 on Gamma_R
//! ```
//!
//! with lifting-based discrete gradients, mesh-dependent dual norms, conforming
//! projections, a residual a posteriori estimator and sampled approximation
//! factors.

pub mod basis;
pub mod assemble;
pub mod coeffs;
pub mod dg;
pub mod estimator;
pub mod error;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod norms;
pub mod quadrature;
pub mod sampling;
pub mod sparse;
pub mod solver;
pub mod spaces;
pub mod tabulate;

pub use error::{HelmError, Result};
pub use num_complex::Complex64 as C64;
