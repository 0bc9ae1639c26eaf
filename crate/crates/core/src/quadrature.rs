//! Quadrature on the reference triangle and the unit segment.
//!
//! The reference triangle is `{(x, y) : x >= 0, y >= 0, x + y <= 1}` with area 1/2.
//! Triangle rules of order >= 2 are collapsed (Duffy) tensor products of
//! Gauss-Legendre rules, so every order up to [`MAX_ORDER`] is available with
//! strictly positive weights and interior points.

use crate::error::{HelmError, Result};

/// Highest polynomial order for which rules are generated.
pub const MAX_ORDER: usize = 60;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Reference coordinates. For edge rules only the first component is used.
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ([f64; 2], f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, z);
        dp = if d.is_finite() { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss rule on `[0, 1]` exact for polynomials of degree `order`.
pub fn edge_rule(order: usize) -> Result<QuadratureRule> {
    if order > MAX_ORDER {
        return Err(HelmError::Capability(format!(
            "edge quadrature order {order} exceeds {MAX_ORDER}"
        )));
    }
    let n = (order + 2) / 2;
    let n = n.max(1);
    let (x, w) = gauss_legendre(n);
    Ok(QuadratureRule {
        points: x.iter().map(|&t| [0.5 * (t + 1.0), 0.0]).collect(),
        weights: w.iter().map(|&wi| 0.5 * wi).collect(),
        exactness_degree: 2 * n - 1,
    })
}

/// Rule on the reference triangle exact for polynomials of total degree `order`.
pub fn triangle_rule(order: usize) -> Result<QuadratureRule> {
    if order > MAX_ORDER {
        return Err(HelmError::Capability(format!(
            "triangle quadrature order {order} exceeds {MAX_ORDER}"
        )));
    }
    if order <= 1 {
        return Ok(QuadratureRule {
            points: vec![[1.0 / 3.0, 1.0 / 3.0]],
            weights: vec![0.5],
            exactness_degree: 1,
        });
    }
    // x = u, y = v (1 - u); the Jacobian (1 - u) raises the degree in u by one.
    let nu = (order + 3) / 2;
    let nv = (order + 2) / 2;
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let mut points = Vec::with_capacity(nu * nv);
    let mut weights = Vec::with_capacity(nu * nv);
    for (a, wa) in xu.iter().zip(&wu) {
        let u = 0.5 * (a + 1.0);
        for (b, wb) in xv.iter().zip(&wv) {
            let v = 0.5 * (b + 1.0);
            points.push([u, v * (1.0 - u)]);
            weights.push(0.25 * wa * wb * (1.0 - u));
        }
    }
    Ok(QuadratureRule {
        points,
        weights,
        exactness_degree: (2 * nv - 1).min(2 * nu - 2),
    })
}
