//! Built-in invariant suite run by `helmdg check`.
//!
//! Every sample is drawn from a seeded ChaCha8 stream and the log carries no
//! timings, so two runs with the same seed print byte-identical logs.

use std::fmt::Write as _;

use helmdg_core::basis::dim;
use helmdg_core::coeffs::CoefficientSet;
use helmdg_core::dg::{jump_at, DgOptions, Discretization, ProblemData, Stabilization};
use helmdg_core::manufactured::{CaseKind, Manufactured};
use helmdg_core::mesh::{l_shape, square_sides, unit_square, BoundaryKind, Mesh};
use helmdg_core::norms::{NormWorkspace, VectorTarget};
use helmdg_core::sampling::{eval_scalar, eval_vector, QPoint, QPoints};
use helmdg_core::quadrature::edge_rule;
use helmdg_core::solver::{solve_ipdg, SolveOptions};
use helmdg_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use BoundaryKind::*;

use crate::error::{Result, StageExt};

pub const DEFAULT_SEED: u64 = 20_240_611;

/// Tolerances of the suite.
pub const LIFT_TOL: f64 = 1e-10;
pub const FORM_TOL: f64 = 1e-10;
pub const NORM_SLACK: f64 = 1e-12;
pub const CONFORM_TOL: f64 = 1e-11;
pub const PAIRING_TOL: f64 = 1e-10;
pub const GALERKIN_TOL: f64 = 1e-9;

const LIFT_FIELDS: usize = 500;
const FORM_CONFIGS: usize = 10;
const NORM_PAIRS: usize = 1000;

const KINDS: [BoundaryKind; 4] = [Dirichlet, Robin, Neumann, Robin];

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CheckReport {
    pub log: String,
    pub results: Vec<CriterionResult>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn criterion(&self, id: usize) -> Option<&CriterionResult> {
        self.results.iter().find(|r| r.id == id)
    }

    fn finish(&mut self, id: usize, name: &'static str, worst: f64, tolerance: f64) {
        let passed = worst <= tolerance;
        let verdict = if passed { "PASS" } else { "FAIL" };
        writeln!(self.log, "criterion {id} {name}: {verdict} (worst {worst:.3e}, tolerance {tolerance:.0e})").unwrap();
        self.results.push(CriterionResult { id, name, passed, worst, tolerance });
    }
}

fn rv(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

fn max_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unit square with mixed labels, split into two regions at x = 1/2.
fn two_region(n: usize) -> helmdg_core::Result<Mesh> {
    let m = unit_square(n, &square_sides(KINDS))?;
    let regions = (0..m.n_triangles()).map(|k| usize::from(m.centroid(k)[0] > 0.5)).collect();
    Mesh::build(m.vertices().to_vec(), m.triangles().to_vec(), regions, m.boundary_edges().to_vec())
}

fn random_coeffs(rng: &mut ChaCha8Rng, regions: usize, omega: f64) -> helmdg_core::Result<CoefficientSet> {
    let mut mu = Vec::new();
    let mut a = Vec::new();
    for _ in 0..regions {
        mu.push(rng.random_range(0.3..3.0));
        let (x, z): (f64, f64) = (rng.random_range(0.3..3.0), rng.random_range(0.3..3.0));
        let y = rng.random_range(-0.25..0.25) * (x * z).sqrt();
        a.push([[x, y], [y, z]]);
    }
    CoefficientSet::new(mu, a, vec![rng.random_range(0.3..3.0)], omega)
}

/// `int_F [[phi]] {{w_i}} . n_F` for every vector basis member `w_i`,
/// by edge quadrature of the traces.
fn lift_oracle(d: &Discretization, phi: &[C64]) -> helmdg_core::Result<Vec<C64>> {
    let rule = edge_rule(d.p + d.q + 2)?;
    let nv = dim(d.q);
    let basis = &d.tab.basis;
    let mut v = vec![0.0; basis.len()];
    let mut out = vec![C64::new(0.0, 0.0); d.n_vector()];
    for f in 0..d.mesh.faces().len() {
        let face = d.mesh.face(f);
        let owners: Vec<usize> = face.owners.iter().flatten().copied().collect();
        let weight = 1.0 / owners.len() as f64;
        for (t, wq) in rule.iter() {
            let j = jump_at(&d.mesh, basis, d.p, phi, f, t[0]) * (wq * face.length * weight);
            if j == C64::new(0.0, 0.0) {
                continue;
            }
            let x = d.mesh.face_point(f, t[0]);
            for &k in &owners {
                basis.values(d.mesh.element_map(k).to_reference(x), &mut v);
                for dd in 0..2 {
                    let base = k * 2 * nv + dd * nv;
                    for i in 0..nv {
                        out[base + i] += j * (face.normal[dd] * v[i]);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn lifting_identity(rng: &mut ChaCha8Rng, rep: &mut CheckReport) -> Result<()> {
    let configs: Vec<(usize, usize)> = [2, 4, 8, 16].iter().flat_map(|&n| (1..=3).map(move |p| (n, p))).collect();
    let mut worst: f64 = 0.0;
    for (c, &(n, p)) in configs.iter().enumerate() {
        let fields = LIFT_FIELDS / configs.len() + usize::from(c < LIFT_FIELDS % configs.len());
        let coeffs = random_coeffs(rng, 2, 2.0).at(c, "check lifting")?;
        let d = two_region(n).and_then(|m| Discretization::new(m, coeffs, p, DgOptions::default())).at(c, "check lifting")?;
        let samples: Vec<Vec<C64>> = (0..fields).map(|_| rv(rng, d.n_broken())).collect();
        let errs = samples
            .par_iter()
            .map(|phi| {
                let lhs = d.forms.vmass.mul_vec(&d.lift(phi));
                let oracle = lift_oracle(&d, phi)?;
                let diff: Vec<C64> = lhs.iter().zip(&oracle).map(|(a, b)| a - b).collect();
                Ok(max_norm(&diff) / max_norm(&oracle).max(f64::MIN_POSITIVE))
            })
            .collect::<helmdg_core::Result<Vec<f64>>>()
            .at(c, "check lifting")?;
        let w = errs.iter().copied().fold(0.0, f64::max);
        writeln!(rep.log, "  lifting: triangles={} p={p} fields={fields} max_rel={w:.3e}", d.mesh.n_triangles()).unwrap();
        worst = worst.max(w);
    }
    rep.finish(1, "lifting identity", worst, LIFT_TOL);
    Ok(())
}

fn form_equivalence(rng: &mut ChaCha8Rng, rep: &mut CheckReport) -> Result<()> {
    let mut worst: f64 = 0.0;
    for c in 0..FORM_CONFIGS {
        let p = 1 + c % 3;
        let stabilization = if c % 2 == 0 { Stabilization::Lifted } else { Stabilization::PureJump };
        let opts = DgOptions { stabilization, beta0: rng.random_range(2.0..20.0), ..Default::default() };
        let omega = rng.random_range(0.5..10.0);
        let coeffs = random_coeffs(rng, 2, omega).at(c, "check forms")?;
        let d = two_region(4).and_then(|m| Discretization::new(m, coeffs, p, opts)).at(c, "check forms")?;
        let w = d.forms.a_h.max_abs_diff(&d.forms.a_h_jump) / d.forms.a_h.max_abs();
        writeln!(rep.log, "  forms: config={c} p={p} {stabilization:?} beta0={:.3} rel={w:.3e}", opts.beta0).unwrap();
        worst = worst.max(w);
    }
    rep.finish(2, "form equivalence", worst, FORM_TOL);
    Ok(())
}

fn check_meshes() -> helmdg_core::Result<Vec<(&'static str, Mesh)>> {
    Ok(vec![
        ("square n=2", two_region(2)?),
        ("square n=4", two_region(4)?),
        ("l_shape n=2", l_shape(2, &helmdg_core::mesh::uniform_label(Robin))?),
    ])
}

/// `w = w_h + s` with `w_h` a discrete BDM field and `s` a smooth field with
/// `s . n = 0` on `y = 0` (the Neumann side of the test squares).
struct HdivSample<'a> {
    d: &'a Discretization,
    wh: Vec<C64>,
    amp: [C64; 3],
    k: [[f64; 2]; 2],
    phase: [f64; 2],
}

impl HdivSample<'_> {
    fn draw<'a>(rng: &mut ChaCha8Rng, d: &'a Discretization) -> HdivSample<'a> {
        let mut c = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let amp = [c(), c(), c()];
        let wh = d.spaces.bdm.embed.mul_vec(&rv(rng, d.spaces.bdm.ndofs));
        let mut r = || rng.random_range(-4.0..4.0);
        HdivSample { d, wh, amp, k: [[r(), r()], [r(), r()]], phase: [r(), r()] }
    }
}

impl VectorTarget for HdivSample<'_> {
    fn vol(&self, q: &QPoint) -> ([C64; 2], C64) {
        let [a, b, c] = self.amp;
        let [k1, k2] = self.k;
        let (t1, t2) = (k1[0] * q.x[0] + k1[1] * q.x[1] + self.phase[0], k2[0] * q.x[0] + k2[1] * q.x[1] + self.phase[1]);
        let y = q.x[1];
        let s = [a * t1.cos() + b, c * (y * t2.sin())];
        let div = a * (-k1[0] * t1.sin()) + c * (t2.sin() + y * k2[1] * t2.cos());
        let (v, dv) = eval_vector(&self.d.mesh, &self.d.tab.basis, self.d.q, &self.wh, q.element, q.x);
        ([s[0] + v[0], s[1] + v[1]], div + dv)
    }
}

/// `(G phi, w) + (phi, div w) - (phi, w . n)_R` by quadrature on `qp`.
fn pairing_by_quadrature(d: &Discretization, qp: &QPoints, phi: &[C64], w: &dyn VectorTarget) -> C64 {
    let g = d.discrete_gradient(phi);
    let mut s = C64::new(0.0, 0.0);
    for q in &qp.vol {
        let (wv, div) = w.vol(q);
        let (v, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, phi, q.element, q.x);
        let (gv, _) = eval_vector(&d.mesh, &d.tab.basis, d.q, &g, q.element, q.x);
        s += (gv[0] * wv[0].conj() + gv[1] * wv[1].conj() + v * div.conj()) * q.w;
    }
    for fp in &qp.robin {
        let wv = w.face(fp);
        let wn = wv[0] * fp.normal[0] + wv[1] * fp.normal[1];
        let (v, _) = eval_scalar(&d.mesh, &d.tab.basis, d.p, phi, fp.element, fp.x);
        s -= v * wn.conj() * fp.w;
    }
    s
}

fn norm_inequalities(rng: &mut ChaCha8Rng, rep: &mut CheckReport) -> Result<()> {
    let mut worst = f64::NEG_INFINITY;
    let mut consistency: f64 = 0.0;
    for (m, (name, mesh)) in check_meshes().at(0, "check norms")?.into_iter().enumerate() {
        for p in 1..=2 {
            let omega = rng.random_range(0.5..20.0);
            let coeffs = random_coeffs(rng, mesh.n_regions(), omega).at(m, "check norms")?;
            let d = Discretization::new(mesh.clone(), coeffs, p, DgOptions::default()).at(m, "check norms")?;
            let nw = NormWorkspace::new(&d).at(m, "check norms")?;
            let qp = QPoints::on_mesh(&d.mesh, 2 * d.q + 8, None).at(m, "check norms")?;
            let zero = vec![C64::new(0.0, 0.0); d.n_vector()];

            // the quadrature pairing reproduces the assembled one on broken fields
            let (v, w) = (rv(rng, d.n_broken()), rv(rng, d.n_vector()));
            let broken = |q: &QPoint| eval_vector(&d.mesh, &d.tab.basis, d.q, &w, q.element, q.x);
            let by_quad = pairing_by_quadrature(&d, &qp, &v, &AnalyticPoint(&broken));
            consistency = consistency.max((by_quad - nw.pairing(&v, &w)).norm() / by_quad.norm());

            let pairs: Vec<(Vec<C64>, HdivSample)> =
                (0..NORM_PAIRS).map(|_| (rv(rng, d.n_broken()), HdivSample::draw(rng, &d))).collect();
            // excess of lhs over rhs, relative to rhs (<= 0 when the inequality holds)
            let (control, duality) = pairs
                .par_iter()
                .map(|(v, w)| {
                    let d1 = nw.dagger1_norm(v);
                    let control = (nw.energy_norm(v) - d1) / d1;
                    let rhs = d1 * nw.daggerdiv_distance(&d, &qp, w, &zero);
                    (control, (pairing_by_quadrature(&d, &qp, v, w).norm() - rhs) / rhs)
                })
                .reduce(|| (f64::NEG_INFINITY, f64::NEG_INFINITY), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            writeln!(rep.log, "  norms: {name} p={p} pairs={NORM_PAIRS} control_excess={control:.3e} duality_excess={duality:.3e}")
                .unwrap();
            worst = worst.max(control).max(duality);
        }
    }
    writeln!(rep.log, "  norms: quadrature pairing vs assembled pairing, max rel {consistency:.3e}").unwrap();
    rep.finish(3, "norm control and duality", worst.max(consistency), NORM_SLACK);
    Ok(())
}

/// Vector target given pointwise on quadrature points.
struct AnalyticPoint<'a, F>(&'a F);

impl<F: Fn(&QPoint) -> ([C64; 2], C64) + Sync> VectorTarget for AnalyticPoint<'_, F> {
    fn vol(&self, q: &QPoint) -> ([C64; 2], C64) {
        (self.0)(q)
    }
}

fn conformity(rng: &mut ChaCha8Rng, rep: &mut CheckReport) -> Result<()> {
    let (mut worst_id, mut worst_pair) = (0.0_f64, 0.0_f64);
    for (m, (name, mesh)) in check_meshes().at(0, "check conformity")?.into_iter().enumerate() {
        for p in 1..=3 {
            let coeffs = random_coeffs(rng, mesh.n_regions(), 1.5).at(m, "check conformity")?;
            let d = Discretization::new(mesh.clone(), coeffs, p, DgOptions::default()).at(m, "check conformity")?;
            let nw = NormWorkspace::new(&d).at(m, "check conformity")?;
            let rule = edge_rule(2 * p).at(m, "check conformity")?;
            let (mut id, mut pair) = (0.0_f64, 0.0_f64);
            for _ in 0..20 {
                let v = d.spaces.conforming.to_broken(&rv(rng, d.spaces.conforming.ndofs));
                let scale = max_norm(&v).max(f64::MIN_POSITIVE);
                let gv = d.forms.grad.to_complex().mul_vec(&v);
                let dg = d.discrete_gradient(&v);
                let gdiff: Vec<C64> = gv.iter().zip(&dg).map(|(a, b)| a - b).collect();
                id = id.max(max_norm(&gdiff) / max_norm(&gv).max(f64::MIN_POSITIVE));
                let sv = d.forms.s_h.to_complex().mul_vec(&v);
                id = id.max(max_norm(&sv) / (d.forms.s_h.max_abs() * scale));
                for f in 0..d.mesh.faces().len() {
                    for (t, _) in rule.iter() {
                        id = id.max(jump_at(&d.mesh, &d.tab.basis, p, &v, f, t[0]).norm() / scale);
                    }
                }
                let w = d.spaces.bdm.embed.mul_vec(&rv(rng, d.spaces.bdm.ndofs));
                pair = pair.max(nw.pairing(&v, &w).norm() / (nw.dagger1_norm(&v) * nw.daggerdiv_norm(&w)));
            }
            writeln!(rep.log, "  conformity: {name} p={p} identities={id:.3e} pairing={pair:.3e}").unwrap();
            worst_id = worst_id.max(id);
            worst_pair = worst_pair.max(pair);
        }
    }
    writeln!(rep.log, "  conformity: worst identity {worst_id:.3e} (tol {CONFORM_TOL:.0e}), worst pairing {worst_pair:.3e} (tol {PAIRING_TOL:.0e})")
        .unwrap();
    // both parts normalized by their own tolerance
    rep.finish(4, "conformity identities", (worst_id / CONFORM_TOL).max(worst_pair / PAIRING_TOL), 1.0);
    Ok(())
}

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

fn galerkin_residual(d: &Discretization, data: &dyn ProblemData) -> helmdg_core::Result<f64> {
    let uh = solve_ipdg(d, data, &SolveOptions::default())?.x;
    let f = d.load(data);
    let r: Vec<C64> = d.forms.b_h.mul_vec(&uh).iter().zip(&f).map(|(a, b)| b - a).collect();
    let rc = d.spaces.conforming.embed.tmul_vec(&r);
    let scale = f.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(max_norm(&rc) / scale)
}

fn galerkin(rng: &mut ChaCha8Rng, rep: &mut CheckReport) -> Result<()> {
    let mut worst: f64 = 0.0;
    for c in 0..6 {
        let p = 1 + c % 3;
        let omega = rng.random_range(0.5..8.0);
        let coeffs = random_coeffs(rng, 2, omega).at(c, "check galerkin")?;
        let data = Source(C64::new(rng.random_range(-2.0..2.0), 1.0));
        let d = two_region(4).and_then(|m| Discretization::new(m, coeffs, p, DgOptions::default())).at(c, "check galerkin")?;
        let w = galerkin_residual(&d, &data).at(c, "check galerkin")?;
        writeln!(rep.log, "  galerkin: two-region square p={p} omega={omega:.4} rel={w:.3e}").unwrap();
        worst = worst.max(w);
    }
    for (c, name) in ["plane_wave", "corner_singular"].into_iter().enumerate() {
        let coeffs = CoefficientSet::homogeneous(1.0, 1.0, 1.0, 5.0).at(c, "check galerkin")?;
        let kind = CaseKind::from_name(name).at(c, "check galerkin")?;
        let case = Manufactured::new(kind, &coeffs).at(c, "check galerkin")?;
        for p in 1..=2 {
            let d = case
                .default_mesh(4)
                .and_then(|m| Discretization::new(m, coeffs.clone(), p, DgOptions::default()))
                .at(c, "check galerkin")?;
            let w = galerkin_residual(&d, &case).at(c, "check galerkin")?;
            writeln!(rep.log, "  galerkin: {name} p={p} rel={w:.3e}").unwrap();
            worst = worst.max(w);
        }
    }
    rep.finish(5, "Galerkin orthogonality", worst, GALERKIN_TOL);
    Ok(())
}

/// Runs criteria 1-5; each criterion draws from its own stream derived from `seed`.
pub fn run_checks(seed: u64) -> Result<CheckReport> {
    let mut rep = CheckReport::default();
    writeln!(rep.log, "helmdg invariant suite, seed {seed}").unwrap();
    let suite: [fn(&mut ChaCha8Rng, &mut CheckReport) -> Result<()>; 5] =
        [lifting_identity, form_equivalence, norm_inequalities, conformity, galerkin];
    for (i, run) in suite.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
        run(&mut rng, &mut rep)?;
    }
    let verdict = if rep.passed() { "all criteria passed" } else { "FAILURES" };
    writeln!(rep.log, "{verdict}").unwrap();
    Ok(rep)
}
