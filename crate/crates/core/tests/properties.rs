//! Randomized invariants of the discretization, norms and estimator.

use helmdg_core::coeffs::CoefficientSet;
use helmdg_core::dg::{jump_at, average_at, DgOptions, Discretization, ProblemData, Stabilization};
use helmdg_core::estimator::{compute_eta, oscillation, ApproximationFactors, SearchMethod};
use helmdg_core::manufactured::{CaseKind, Manufactured};
use helmdg_core::mesh::{read_mesh, square_sides, unit_square, write_mesh, BoundaryKind, Mesh};
use helmdg_core::norms::NormWorkspace;
use helmdg_core::quadrature::edge_rule;
use helmdg_core::solver::{solve_ipdg, SolveOptions};
use helmdg_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use BoundaryKind::*;

fn rv(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

/// Two-region square (interface at x = 1/2) with random SPD tensors.
fn two_region(n: usize, kinds: [BoundaryKind; 4]) -> Mesh {
    let m = unit_square(n, &square_sides(kinds)).unwrap();
    let regions = (0..m.n_triangles()).map(|k| usize::from(m.centroid(k)[0] > 0.5)).collect();
    Mesh::build(m.vertices().to_vec(), m.triangles().to_vec(), regions, m.boundary_edges().to_vec()).unwrap()
}

fn random_coeffs(rng: &mut ChaCha8Rng, regions: usize, omega: f64) -> CoefficientSet {
    let mut mu = Vec::new();
    let mut a = Vec::new();
    for _ in 0..regions {
        mu.push(rng.random_range(0.3..3.0));
        let (x, z): (f64, f64) = (rng.random_range(0.3..3.0), rng.random_range(0.3..3.0));
        let y = rng.random_range(-0.25..0.25) * (x * z).sqrt();
        a.push([[x, y], [y, z]]);
    }
    CoefficientSet::new(mu, a, vec![rng.random_range(0.3..3.0)], omega).unwrap()
}

const KINDS: [BoundaryKind; 4] = [Dirichlet, Robin, Neumann, Robin];

struct Source(C64);
impl ProblemData for Source {
    fn source(&self, x: [f64; 2]) -> C64 {
        self.0 * (1.0 + x[0] * x[1])
    }
    fn robin(&self, x: [f64; 2], _n: [f64; 2]) -> C64 {
        C64::new(x[1], -x[0])
    }
    fn neumann(&self, x: [f64; 2], _n: [f64; 2]) -> C64 {
        C64::new(1.0, x[0])
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn lifting_matches_face_integrals(seed in any::<u64>(), p in 1usize..=3, raised in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let opts = DgOptions { raised_lift: raised, ..Default::default() };
        let d = Discretization::new(two_region(2, KINDS), random_coeffs(&mut rng, 2, 2.0), p, opts).unwrap();
        let phi = rv(&mut rng, d.n_broken());
        let lhs = d.forms.vmass.mul_vec(&d.lift(&phi));
        let rule = edge_rule(2 * d.q + 2).unwrap();
        let w = rv(&mut rng, d.n_vector());
        let mut oracle = C64::new(0.0, 0.0);
        for f in 0..d.mesh.faces().len() {
            let face = d.mesh.face(f);
            for (t, wq) in rule.iter() {
                let j = jump_at(&d.mesh, &d.tab.basis, p, &phi, f, t[0]);
                let a = average_at(&d.mesh, &d.tab.basis, d.q, &w, f, t[0]);
                oracle += j * (a[0] * face.normal[0] + a[1] * face.normal[1]) * (wq * face.length);
            }
        }
        // sum_i w_i (M L phi)_i with real basis functions
        let paired: C64 = w.iter().zip(&lhs).map(|(a, b)| a * b).sum();
        prop_assert!((paired - oracle).norm() <= 1e-10 * (1.0 + oracle.norm()));
    }

    #[test]
    fn presentations_agree(seed in any::<u64>(), p in 1usize..=3, pure in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stabilization = if pure { Stabilization::PureJump } else { Stabilization::Lifted };
        let opts = DgOptions { stabilization, beta0: rng.random_range(2.0..20.0), ..Default::default() };
        let d = Discretization::new(two_region(3, KINDS), random_coeffs(&mut rng, 2, 1.0), p, opts).unwrap();
        prop_assert!(d.forms.a_h.max_abs_diff(&d.forms.a_h_jump) <= 1e-10 * d.forms.a_h.max_abs());
        prop_assert!(d.forms.a_h.hermitian_defect() <= 1e-12 * d.forms.a_h.max_abs());
    }

    #[test]
    fn norms_control_and_duality(seed in any::<u64>(), p in 1usize..=2, omega in 0.5f64..20.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Discretization::new(two_region(2, KINDS), random_coeffs(&mut rng, 2, omega), p, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        for _ in 0..20 {
            let v = rv(&mut rng, d.n_broken());
            prop_assert!(nw.energy_norm(&v) <= nw.dagger1_norm(&v) * (1.0 + 1e-12));
            let w = d.spaces.bdm.embed.mul_vec(&rv(&mut rng, d.spaces.bdm.ndofs));
            let q = nw.pairing(&v, &w).norm();
            prop_assert!(q <= nw.dagger1_norm(&v) * nw.daggerdiv_norm(&w) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn conforming_fields_are_seen_as_smooth(seed in any::<u64>(), p in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Discretization::new(two_region(2, KINDS), random_coeffs(&mut rng, 2, 1.5), p, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        let v = d.spaces.conforming.to_broken(&rv(&mut rng, d.spaces.conforming.ndofs));
        let lv = d.lift(&v);
        prop_assert!(lv.iter().all(|z| z.norm() <= 1e-11 * (1.0 + d.forms.grad.max_abs())));
        let sv = d.forms.s_h.to_complex().mul_vec(&v);
        prop_assert!(sv.iter().all(|z| z.norm() <= 1e-11 * d.forms.s_h.max_abs() * (1.0 + v.len() as f64)));
        let w = d.spaces.bdm.embed.mul_vec(&rv(&mut rng, d.spaces.bdm.ndofs));
        let scale = nw.dagger1_norm(&v) * nw.daggerdiv_norm(&w);
        prop_assert!(nw.pairing(&v, &w).norm() <= 1e-10 * scale);
    }

    #[test]
    fn solves_are_galerkin_orthogonal(seed in any::<u64>(), p in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = rng.random_range(0.5..4.0);
        let c = random_coeffs(&mut rng, 2, omega);
        let d = Discretization::new(two_region(3, KINDS), c, p, DgOptions::default()).unwrap();
        let data = Source(C64::new(rng.random_range(-2.0..2.0), 1.0));
        let uh = solve_ipdg(&d, &data, &SolveOptions::default()).unwrap().x;
        let f = d.load(&data);
        let r: Vec<C64> = d.forms.b_h.mul_vec(&uh).iter().zip(&f).map(|(a, b)| b - a).collect();
        let rc = d.spaces.conforming.embed.tmul_vec(&r);
        let scale = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(rc.iter().all(|z| z.norm() <= 1e-9 * scale));
    }

    #[test]
    fn estimator_is_pythagorean(seed in any::<u64>(), p in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Discretization::new(two_region(2, KINDS), random_coeffs(&mut rng, 2, 2.0), p, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        let uh = rv(&mut rng, d.n_broken());
        let rep = compute_eta(&d, &nw, &Source(C64::new(1.0, 0.5)), &uh).unwrap();
        let sum: f64 = rep.eta_k.iter().map(|e| e * e).sum();
        prop_assert!((rep.eta * rep.eta - sum).abs() <= 1e-12 * rep.eta * rep.eta);
        prop_assert!(rep.terms.iter().all(|t| t.as_array().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn factor_combinations_are_identities(cg in 0.0f64..5.0, cd in 0.0f64..5.0, tg in 0.0f64..5.0, td in 0.0f64..5.0) {
        let f = ApproximationFactors::from_components(cg, cd, tg, td, [SearchMethod::Dense; 4]);
        let tol = 1e-14 * (1.0 + f.total * f.total);
        prop_assert!((f.g * f.g - (4.0 * cg * cg + 2.0 * tg * tg)).abs() <= tol);
        prop_assert!((f.total * f.total - (f.g * f.g + f.d * f.d)).abs() <= tol);
        prop_assert!((f.total * f.total - (4.0 * f.check * f.check + 2.0 * f.tilde * f.tilde)).abs() <= tol);
    }

    #[test]
    fn refined_meshes_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = two_region(2, KINDS);
        for _ in 0..3 {
            let mut marked: Vec<usize> = (0..m.n_triangles()).filter(|_| rng.random_bool(0.3)).collect();
            if marked.is_empty() {
                marked.push(rng.random_range(0..m.n_triangles()));
            }
            m = m.refine(&marked).unwrap();
        }
        prop_assert!((m.total_area() - 1.0).abs() < 1e-12);
        let back = read_mesh(&write_mesh(&m)).unwrap();
        prop_assert_eq!(back.triangles(), m.triangles());
        prop_assert_eq!(back.regions(), m.regions());
        prop_assert_eq!(back.faces().len(), m.faces().len());
    }
}

/// Least-squares slope of `log y` against `log x`.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn oscillation_gains_one_order_from_the_mesh_weight() {
    let f = |x: [f64; 2]| C64::new((10.0 * x[0]).sin(), 0.0);
    for p in 1..=2 {
        let (mut hs, mut os) = (Vec::new(), Vec::new());
        for n in [8, 16, 32, 64] {
            let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 1.0).unwrap();
            let d = Discretization::new(unit_square(n, &square_sides([Dirichlet; 4])).unwrap(), c, p, DgOptions::default())
                .unwrap();
            hs.push(d.mesh.h_max());
            os.push(oscillation(&d, &f).total);
        }
        let s = slope(&hs, &os);
        assert!((s - (p + 2) as f64).abs() < 0.15, "p={p}: slope {s}, {os:?}");
    }
}

#[test]
fn patches_of_corner_triangles() {
    let m = unit_square(4, &square_sides([Neumann; 4])).unwrap();
    // the triangle at the origin corner: its patch is every triangle touching one of its vertices
    let k = (0..m.n_triangles()).find(|&k| m.triangles()[k].iter().any(|&v| m.vertices()[v] == [0.0, 0.0])).unwrap();
    let patch = m.vertex_patch(k);
    let mine = m.triangles()[k];
    let expected: Vec<usize> =
        (0..m.n_triangles()).filter(|&j| m.triangles()[j].iter().any(|v| mine.contains(v))).collect();
    assert_eq!(patch, expected);
    assert!(patch.contains(&k));
}

#[test]
fn manufactured_plane_wave_converges_at_order_p() {
    let c = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 5.0).unwrap();
    let case = Manufactured::new(CaseKind::from_name("plane_wave").unwrap(), &c).unwrap();
    let mut etas = Vec::new();
    let mut hs = Vec::new();
    for n in [4, 8, 16] {
        let d = Discretization::new(case.default_mesh(n).unwrap(), c.clone(), 2, DgOptions::default()).unwrap();
        let nw = NormWorkspace::new(&d).unwrap();
        let uh = solve_ipdg(&d, &case, &SolveOptions::default()).unwrap().x;
        etas.push(compute_eta(&d, &nw, &case, &uh).unwrap().eta);
        hs.push(d.mesh.h_max());
    }
    // refining everywhere reduces the estimator (trend, not element-wise)
    assert!(etas.windows(2).all(|w| w[1] < w[0]), "{etas:?}");
    assert!(slope(&hs, &etas) > 1.7, "{etas:?}");
}
