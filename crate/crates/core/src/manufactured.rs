//! Manufactured solutions with matching source and boundary data.

use std::f64::consts::PI;
use std::fmt;

use crate::coeffs::{CoefficientSet, Mat2};
use crate::dg::ProblemData;
use crate::error::{HelmError, Result};
use crate::mesh::{l_shape, reentrant_sides, square_sides, uniform_label, unit_square, BoundaryKind, Mesh};
use crate::norms::{ScalarTarget, VectorTarget};
use crate::sampling::QPoint;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CaseKind {
    /// `exp(i k d . x)` with `k = omega sqrt(mu / alpha)`, so `f = 0`.
    PlaneWave { direction: [f64; 2] },
    /// `chi(r) r^lambda sin(lambda theta)` on the L-shape, `chi` a C^2 cutoff
    /// from 1 at `r0` to 0 at `r1`; `r0 = inf` drops the cutoff.
    CornerSingular { lambda: f64, r0: f64, r1: f64 },
    Constant { value: f64 },
    /// `x (2 + y) - i x^2`, vanishing on `x = 0`.
    Quadratic,
    /// `sin(pi x) sin(pi y)` on the all-Dirichlet unit square.
    SmoothSine,
}

impl CaseKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PlaneWave { .. } => "plane_wave",
            Self::CornerSingular { .. } => "corner_singular",
            Self::Constant { .. } => "constant",
            Self::Quadratic => "quadratic",
            Self::SmoothSine => "smooth_sine",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "plane_wave" => Ok(Self::PlaneWave { direction: [0.6, 0.8] }),
            "corner_singular" => Ok(Self::CornerSingular { lambda: 2.0 / 3.0, r0: 0.45, r1: 0.95 }),
            "constant" => Ok(Self::Constant { value: 1.0 }),
            "quadratic" => Ok(Self::Quadratic),
            "smooth_sine" => Ok(Self::SmoothSine),
            _ => Err(HelmError::Input(format!("unknown manufactured case '{name}'"))),
        }
    }
}

/// A manufactured solution for homogeneous coefficients `mu`, `A`, `gamma`, `omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub kind: CaseKind,
    pub mu: f64,
    pub a: Mat2,
    pub gamma: f64,
    pub omega: f64,
}

impl fmt::Display for Manufactured {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())
    }
}

fn cutoff(r: f64, r0: f64, r1: f64) -> (f64, f64, f64) {
    if r <= r0 {
        return (1.0, 0.0, 0.0);
    }
    if r >= r1 {
        return (0.0, 0.0, 0.0);
    }
    let l = r1 - r0;
    let t = (r - r0) / l;
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t) / l;
    let dds = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (l * l);
    (1.0 - s, -ds, -dds)
}

impl Manufactured {
    pub fn new(kind: CaseKind, coeffs: &CoefficientSet) -> Result<Self> {
        if coeffs.mu.len() != 1 || coeffs.gamma.len() > 1 {
            return Err(HelmError::Input("manufactured cases need homogeneous coefficients".into()));
        }
        let a = coeffs.a[0];
        if matches!(kind, CaseKind::PlaneWave { .. } | CaseKind::CornerSingular { .. } | CaseKind::SmoothSine)
            && (a[0][1] != 0.0 || a[0][0] != a[1][1])
        {
            return Err(HelmError::Input(format!("case {} needs an isotropic A", kind.name())));
        }
        Ok(Self { kind, mu: coeffs.mu[0], a, gamma: coeffs.gamma.first().copied().unwrap_or(1.0), omega: coeffs.omega })
    }

    /// Default domain with its boundary labels (`n` cells per unit length).
    pub fn default_mesh(&self, n: usize) -> Result<Mesh> {
        use BoundaryKind::*;
        match self.kind {
            CaseKind::PlaneWave { .. } => unit_square(n, &uniform_label(Robin)),
            CaseKind::CornerSingular { r0, .. } if r0.is_finite() => l_shape(n, &uniform_label(Dirichlet)),
            // without the cutoff the singular function only vanishes on the reentrant edges
            CaseKind::CornerSingular { .. } => l_shape(n, &reentrant_sides(Dirichlet, Robin)),
            CaseKind::Constant { .. } => unit_square(n, &uniform_label(Neumann)),
            CaseKind::Quadratic => unit_square(n, &square_sides([Dirichlet, Robin, Neumann, Robin])),
            CaseKind::SmoothSine => unit_square(n, &uniform_label(Dirichlet)),
        }
    }

    /// Point toward which error quadrature must be graded.
    pub fn singular_point(&self) -> Option<[f64; 2]> {
        match self.kind {
            CaseKind::CornerSingular { .. } => Some([0.0, 0.0]),
            _ => None,
        }
    }

    fn alpha(&self) -> f64 {
        self.a[0][0]
    }

    pub fn wavenumber(&self) -> f64 {
        self.omega * (self.mu / self.alpha()).sqrt()
    }

    /// `(u, grad u)`.
    pub fn eval(&self, x: [f64; 2]) -> (C64, [C64; 2]) {
        let i = C64::new(0.0, 1.0);
        match self.kind {
            CaseKind::PlaneWave { direction: d } => {
                let k = self.wavenumber();
                let u = (i * k * (d[0] * x[0] + d[1] * x[1])).exp();
                (u, [i * k * d[0] * u, i * k * d[1] * u])
            }
            CaseKind::CornerSingular { lambda, r0, r1 } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 {
                    return (C64::new(0.0, 0.0), [C64::new(0.0, 0.0); 2]);
                }
                let th = polar_angle(x);
                let (chi, dchi, _) = cutoff(r, r0, r1);
                let s = r.powf(lambda) * (lambda * th).sin();
                let sr = lambda * r.powf(lambda - 1.0) * (lambda * th).sin();
                let st = lambda * r.powf(lambda - 1.0) * (lambda * th).cos();
                let gr = chi * sr + dchi * s;
                let gt = chi * st;
                let (c, sn) = (th.cos(), th.sin());
                (C64::new(chi * s, 0.0), [C64::new(gr * c - gt * sn, 0.0), C64::new(gr * sn + gt * c, 0.0)])
            }
            CaseKind::Constant { value } => (C64::new(value, 0.0), [C64::new(0.0, 0.0); 2]),
            CaseKind::Quadratic => (
                C64::new(x[0] * (2.0 + x[1]), -x[0] * x[0]),
                [C64::new(2.0 + x[1], -2.0 * x[0]), C64::new(x[0], 0.0)],
            ),
            CaseKind::SmoothSine => {
                let (sx, sy) = ((PI * x[0]).sin(), (PI * x[1]).sin());
                let (cx, cy) = ((PI * x[0]).cos(), (PI * x[1]).cos());
                (C64::new(sx * sy, 0.0), [C64::new(PI * cx * sy, 0.0), C64::new(PI * sx * cy, 0.0)])
            }
        }
    }

    /// `div(A grad u)`.
    pub fn div_flux(&self, x: [f64; 2]) -> C64 {
        match self.kind {
            CaseKind::PlaneWave { .. } => {
                let k = self.wavenumber();
                -self.eval(x).0 * (self.alpha() * k * k)
            }
            CaseKind::CornerSingular { lambda, r0, r1 } => {
                let r = x[0].hypot(x[1]);
                if r == 0.0 || r <= r0 {
                    return C64::new(0.0, 0.0);
                }
                let th = polar_angle(x);
                let (_, dchi, ddchi) = cutoff(r, r0, r1);
                let s = r.powf(lambda) * (lambda * th).sin();
                let sr = lambda * r.powf(lambda - 1.0) * (lambda * th).sin();
                C64::new(self.alpha() * (2.0 * dchi * sr + s * (ddchi + dchi / r)), 0.0)
            }
            CaseKind::Constant { .. } => C64::new(0.0, 0.0),
            // A : Hess u with u_xx = -2i, u_xy = 1, u_yy = 0
            CaseKind::Quadratic => C64::new(2.0 * self.a[0][1], -2.0 * self.a[0][0]),
            CaseKind::SmoothSine => -self.eval(x).0 * (2.0 * PI * PI * self.alpha()),
        }
    }

    pub fn flux(&self, x: [f64; 2]) -> [C64; 2] {
        let g = self.eval(x).1;
        [self.a[0][0] * g[0] + self.a[0][1] * g[1], self.a[1][0] * g[0] + self.a[1][1] * g[1]]
    }

    /// `f = -omega^2 mu u - div(A grad u)`.
    pub fn f(&self, x: [f64; 2]) -> C64 {
        -self.eval(x).0 * (self.omega * self.omega * self.mu) - self.div_flux(x)
    }
}

/// Angle in `[0, 2 pi)`.
pub fn polar_angle(x: [f64; 2]) -> f64 {
    let t = x[1].atan2(x[0]);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

impl ProblemData for Manufactured {
    fn source(&self, x: [f64; 2]) -> C64 {
        self.f(x)
    }

    fn neumann(&self, x: [f64; 2], n: [f64; 2]) -> C64 {
        let s = self.flux(x);
        s[0] * n[0] + s[1] * n[1]
    }

    fn robin(&self, x: [f64; 2], n: [f64; 2]) -> C64 {
        self.neumann(x, n) - C64::new(0.0, self.omega * self.gamma) * self.eval(x).0
    }
}

impl ScalarTarget for Manufactured {
    fn vol(&self, q: &QPoint) -> (C64, [C64; 2]) {
        self.eval(q.x)
    }
}

/// The flux `A grad u` with `div(A grad u) = -f - omega^2 mu u`.
pub struct FluxOf<'a>(pub &'a Manufactured);

impl VectorTarget for FluxOf<'_> {
    fn vol(&self, q: &QPoint) -> ([C64; 2], C64) {
        (self.0.flux(q.x), self.0.div_flux(q.x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_laplacian(m: &Manufactured, x: [f64; 2]) -> C64 {
        let h = 1e-4;
        let u = |p: [f64; 2]| m.eval(p).0;
        (u([x[0] + h, x[1]]) + u([x[0] - h, x[1]]) + u([x[0], x[1] + h]) + u([x[0], x[1] - h]) - u(x) * 4.0)
            / (h * h)
    }

    fn case(kind: CaseKind, a: f64, omega: f64) -> Manufactured {
        Manufactured::new(kind, &CoefficientSet::homogeneous(1.7, a, 0.9, omega).unwrap()).unwrap()
    }

    #[test]
    fn plane_wave_has_zero_source() {
        let m = case(CaseKind::from_name("plane_wave").unwrap(), 1.3, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            assert!(m.f(x).norm() < 1e-12);
            let lap = fd_laplacian(&m, x);
            assert!((lap * 1.3 - m.div_flux(x)).norm() < 1e-5 * m.div_flux(x).norm());
        }
    }

    #[test]
    fn corner_function_is_harmonic_near_the_corner() {
        let m = case(CaseKind::from_name("corner_singular").unwrap(), 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let r = rng.random_range(0.05..0.9);
            let th = rng.random_range(0.1..(1.5 * PI - 0.1));
            let x = [r * th.cos(), r * th.sin()];
            let lap = fd_laplacian(&m, x);
            assert!((lap - m.div_flux(x)).norm() < 1e-4, "r={r}: {lap} vs {}", m.div_flux(x));
            if r < 0.45 {
                assert!(lap.norm() < 1e-4);
            }
        }
        // vanishes on both edges of the reentrant corner and beyond the cutoff
        assert!(m.eval([0.3, 0.0]).0.norm() < 1e-15);
        assert!(m.eval([0.0, -0.3]).0.norm() < 1e-12);
        assert_eq!(m.eval([0.99, 0.5]).0.norm(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in ["plane_wave", "corner_singular", "quadratic", "smooth_sine", "constant"] {
            let m = case(CaseKind::from_name(name).unwrap(), 1.0, 2.0);
            for _ in 0..10 {
                let x = [rng.random_range(-0.9..-0.1), rng.random_range(0.1..0.9)];
                let h = 1e-6;
                let (_, g) = m.eval(x);
                let dx = (m.eval([x[0] + h, x[1]]).0 - m.eval([x[0] - h, x[1]]).0) / (2.0 * h);
                let dy = (m.eval([x[0], x[1] + h]).0 - m.eval([x[0], x[1] - h]).0) / (2.0 * h);
                assert!((g[0] - dx).norm() < 1e-6 && (g[1] - dy).norm() < 1e-6, "{name}");
            }
        }
    }

    #[test]
    fn quadratic_with_anisotropy() {
        let c = CoefficientSet::new(vec![1.0], vec![[[2.0, 0.5], [0.5, 1.0]]], vec![1.0], 1.0).unwrap();
        let m = Manufactured::new(CaseKind::Quadratic, &c).unwrap();
        let x = [0.3, 0.7];
        let h = 1e-4;
        let fl = |p: [f64; 2]| m.flux(p);
        let div = (fl([x[0] + h, x[1]])[0] - fl([x[0] - h, x[1]])[0] + fl([x[0], x[1] + h])[1]
            - fl([x[0], x[1] - h])[1])
            / (2.0 * h);
        assert!((div - m.div_flux(x)).norm() < 1e-8);
    }

    #[test]
    fn constant_residual_is_zero() {
        let m = case(CaseKind::Constant { value: 2.0 }, 1.0, 3.0);
        assert!((m.f([0.2, 0.4]) - C64::new(-9.0 * 1.7 * 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn unknown_names_are_rejected() {
        assert!(CaseKind::from_name("bessel").is_err());
    }
}
