//! Convergence, adaptive, approximation-factor and stability studies.

use std::path::Path;
use std::time::Instant;

use helmdg_core::coeffs::CoefficientSet;
use helmdg_core::dg::{Discretization, ProblemData};
use helmdg_core::estimator::{
    compute_eta, efficiency_ratios, reliability_check, sample_gamma_ba, EstimatorReport, GammaOptions,
};
use helmdg_core::linalg::{generalized_eigenvalues, DENSE_GRAM_LIMIT};
use helmdg_core::manufactured::{CaseKind, FluxOf, Manufactured};
use helmdg_core::mesh::{l_shape, square_sides, uniform_label, unit_square, BoundaryKind, Mesh};
use helmdg_core::norms::{coercivity_margin, energy_error, NormWorkspace, DENSE_MARGIN_LIMIT};
use helmdg_core::sampling::{Grading, QPoints};
use helmdg_core::solver::{solve_ipdg, stability_probe, SolveOptions};
use helmdg_core::{HelmError, C64};

use crate::config::{BoundarySpec, DomainPreset, ProblemSpec, StudyConfig, StudyKind};
use crate::error::{DriverError, Result, StageExt};
use crate::fields::{emit_fields, write_file};
use crate::record::{ConvergenceRecord, Row, Timings};

/// Levels of red refinement toward a singular point in error quadrature.
const GRADING_LEVELS: usize = 12;

struct ConstantSource(C64);

impl ProblemData for ConstantSource {
    fn source(&self, _: [f64; 2]) -> C64 {
        self.0
    }
}

/// Initial mesh, coefficients and data of a study.
pub struct Problem {
    pub mesh: Mesh,
    pub coeffs: CoefficientSet,
    pub case: Option<Manufactured>,
    source: ConstantSource,
}

impl Problem {
    pub fn data(&self) -> &dyn ProblemData {
        match &self.case {
            Some(c) => c,
            None => &self.source,
        }
    }

    pub fn singular_point(&self) -> Option<[f64; 2]> {
        self.case.as_ref().and_then(Manufactured::singular_point)
    }

    pub fn build(cfg: &StudyConfig) -> Result<Self> {
        let coeffs = CoefficientSet::new(cfg.mu.clone(), cfg.a.clone(), cfg.gamma.clone(), cfg.omega)
            .map_err(|e| DriverError::Config(e.to_string()))?;
        let (case, source) = match cfg.problem {
            ProblemSpec::Manufactured(kind) => (
                Some(Manufactured::new(kind, &coeffs).map_err(|e| DriverError::Config(e.to_string()))?),
                C64::new(0.0, 0.0),
            ),
            ProblemSpec::Source(v) => (None, v),
        };
        let mesh = initial_mesh(cfg, case.as_ref()).at(0, "mesh")?;
        coeffs.check_mesh(&mesh).map_err(|e| DriverError::Config(e.to_string()))?;
        Ok(Self { mesh, coeffs, case, source: ConstantSource(source) })
    }
}

fn natural_domain(case: Option<&Manufactured>) -> DomainPreset {
    match case.map(|c| c.kind) {
        Some(CaseKind::CornerSingular { .. }) => DomainPreset::LShape,
        _ => DomainPreset::UnitSquare,
    }
}

fn initial_mesh(cfg: &StudyConfig, case: Option<&Manufactured>) -> helmdg_core::Result<Mesh> {
    let natural = natural_domain(case);
    let domain = cfg.domain.clone().unwrap_or_else(|| natural.clone());
    let mesh = match (&domain, cfg.boundary, case) {
        (DomainPreset::File(path), _, _) => Mesh::load(path)?,
        (d, None, Some(c)) if *d == natural => c.default_mesh(cfg.n)?,
        (d, b, _) => {
            let rule = match b.unwrap_or(BoundarySpec::Uniform(BoundaryKind::Robin)) {
                BoundarySpec::Uniform(k) => uniform_label(k),
                BoundarySpec::Sides(s) => square_sides(s),
            };
            match d {
                DomainPreset::LShape => l_shape(cfg.n, &rule)?,
                _ => unit_square(cfg.n, &rule)?,
            }
        }
    };
    let Some(x0) = cfg.interface_x else {
        return Ok(mesh);
    };
    let regions = (0..mesh.n_triangles()).map(|k| usize::from(mesh.centroid(k)[0] > x0)).collect();
    Mesh::build(mesh.vertices().to_vec(), mesh.triangles().to_vec(), regions, mesh.boundary_edges().to_vec())
}

/// Least-squares slope of `log y` against `log x` over positive pairs.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Smallest set of elements carrying `theta^2` of the squared estimator.
pub fn dorfler(eta_k: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..eta_k.len()).collect();
    order.sort_by(|&a, &b| eta_k[b].total_cmp(&eta_k[a]).then(a.cmp(&b)));
    let total: f64 = eta_k.iter().map(|e| e * e).sum();
    let goal = theta * theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for k in order {
        if acc >= goal && !out.is_empty() {
            break;
        }
        acc += eta_k[k] * eta_k[k];
        out.push(k);
    }
    out.sort_unstable();
    out
}

fn classify(e: &HelmError) -> &'static str {
    match e {
        HelmError::NearSingular { .. } => "near_singular",
        _ => "numerical",
    }
}

/// Everything computed on one mesh.
pub struct MeshResult {
    pub d: Discretization,
    pub uh: Vec<C64>,
    pub report: EstimatorReport,
    pub row: Row,
}

struct Runner<'a> {
    cfg: &'a StudyConfig,
    prob: &'a Problem,
    timings: Timings,
    /// Coercivity margin of the last mesh small enough to measure it.
    rho: Option<f64>,
}

impl Runner<'_> {
    fn timed<T>(&mut self, level: usize, stage: &'static str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings.add(level, stage, t.elapsed().as_secs_f64());
        out
    }

    fn gamma_options(&self) -> GammaOptions {
        GammaOptions { seed: self.cfg.seed, ..Default::default() }
    }

    /// Solve, estimate and measure on `mesh` with the given coefficients.
    fn evaluate(&mut self, level: usize, mesh: Mesh, coeffs: CoefficientSet, gamma: bool) -> Result<MeshResult> {
        let cfg = self.cfg;
        let d = self.timed(level, "assemble", || Discretization::new(mesh, coeffs, cfg.p, cfg.dg)).at(level, "assemble")?;
        let mut row = Row::ok(level, d.omega());
        row.h = d.mesh.h_max();
        row.triangles = d.mesh.n_triangles();
        row.dofs = d.n_broken();
        let data = self.prob.data();
        let sol = self.timed(level, "solve", || solve_ipdg(&d, data, &SolveOptions::default())).at(level, "solve")?;
        row.condition = Some(sol.condition);
        let nw = self.timed(level, "norms", || NormWorkspace::new(&d)).at(level, "norms")?;
        let report = self.timed(level, "estimate", || compute_eta(&d, &nw, data, &sol.x)).at(level, "estimate")?;
        row.eta = Some(report.eta);
        row.rc_surrogate = Some(report.rc_surrogate);
        row.rc_bound = Some(report.rc_bound);
        row.osc = Some(report.osc.total);

        let mut error = None;
        if let Some(case) = &self.prob.case {
            let grading = case.singular_point().map(|point| Grading { point, levels: GRADING_LEVELS });
            let qp = QPoints::on_mesh(&d.mesh, 2 * d.q + 8, grading).at(level, "error")?;
            let err = self.timed(level, "error", || energy_error(&d, &qp, case, &sol.x));
            row.energy_error = Some(err.energy());
            row.l2_mu_error = Some(err.l2_mu());
            row.robin_error = Some(err.robin());
            row.effectivity = Some(report.effectivity(err.energy()).value);
            row.efficiency_max =
                efficiency_ratios(&d.mesh, &report, &err.per_element_sq).into_iter().reduce(f64::max);
            if d.n_broken() <= DENSE_MARGIN_LIMIT {
                let m = self.timed(level, "margin", || coercivity_margin(&d, &nw)).at(level, "margin")?;
                self.rho = Some(m.max(0.0).sqrt());
                row.rho_measured = Some(true);
            } else if self.rho.is_some() {
                row.rho_measured = Some(false);
            }
            row.rho = self.rho;
            let (dist_g, dist_d) = self.timed(level, "best_approx", || {
                let pg = nw.project_g_target(&d, &qp, case);
                let vg = d.spaces.conforming.embed.mul_vec(&pg.coeffs);
                let flux = FluxOf(case);
                let pd = nw.project_d_target(&d, &qp, &flux);
                let wd = d.spaces.bdm.embed.mul_vec(&pd.coeffs);
                (nw.dagger1_distance(&d, &qp, case, &vg), nw.daggerdiv_distance(&d, &qp, &flux, &wd))
            });
            row.best_approx = Some(dist_g);
            row.quasi_opt = Some(err.energy() / dist_g);
            row.flux_best_approx = Some(dist_d);
            if let Some(rho) = self.rho.filter(|r| *r > 0.0) {
                row.apriori_ratio = Some(err.energy() / (dist_g + dist_d / rho));
            }
            error = Some(err);
        }

        if gamma {
            let opts = self.gamma_options();
            let f = self.timed(level, "gamma", || sample_gamma_ba(&d, &nw, &opts)).at(level, "gamma")?;
            row.gamma_check_g = Some(f.check_g);
            row.gamma_check_d = Some(f.check_d);
            row.gamma_tilde_g = Some(f.tilde_g);
            row.gamma_tilde_d = Some(f.tilde_d);
            row.gamma_total = Some(f.total);
            row.gamma_converged = Some(f.converged());
            if let Some(err) = &error {
                let rc = reliability_check(err, &report, &f);
                row.reliability_index = Some(report.eta * (1.0 + f.total * f.total).sqrt() / err.energy());
                row.energy_ratio = Some(rc.energy_ratio);
                row.l2_ratio = Some(rc.l2_ratio);
                row.robin_ratio = Some(rc.robin_ratio);
            }
        }
        Ok(MeshResult { d, uh: sol.x, report, row })
    }

    fn probe(&mut self, level: usize, d: &Discretization) -> Result<Option<f64>> {
        if d.spaces.conforming.ndofs == 0 || d.spaces.conforming.ndofs > DENSE_GRAM_LIMIT {
            return Ok(None);
        }
        self.timed(level, "probe", || stability_probe(d)).at(level, "probe").map(Some)
    }

    fn fields(&self, level: usize, r: &MeshResult) -> Result<()> {
        if self.cfg.write_fields {
            emit_fields(&self.cfg.output_dir.join("fields"), &format!("level_{level:02}"), &r.d, &r.uh, &r.report.eta_k)?;
        }
        Ok(())
    }
}

fn base_record(cfg: &StudyConfig, prob: &Problem, kind: &str) -> ConvergenceRecord {
    let mut rec = ConvergenceRecord::default();
    rec.set_meta("kind", kind);
    rec.set_meta("case", prob.case.as_ref().map_or("source".to_string(), |c| c.kind.name().to_string()));
    rec.set_meta("p", cfg.p);
    rec.set_meta("omega", cfg.omega);
    rec.set_meta("beta0", cfg.dg.beta0);
    rec.set_meta("seed", cfg.seed);
    rec
}

fn fit(rec: &mut ConvergenceRecord, name: &str, x: impl Fn(&Row) -> Option<f64>, y: impl Fn(&Row) -> Option<f64>) {
    let (xs, ys): (Vec<f64>, Vec<f64>) = rec.rows.iter().filter_map(|r| Some((x(r)?, y(r)?))).unzip();
    if let Some(s) = loglog_slope(&xs, &ys) {
        rec.set_meta(&format!("slope {name}"), s);
    }
}

/// Record and timings of a finished study.
pub struct StudyOutput {
    pub record: ConvergenceRecord,
    pub timings: Timings,
}

impl StudyOutput {
    /// Writes `<name>.csv` and `timings.csv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        write_file(&dir.join(format!("{name}.csv")), &self.record.to_csv())?;
        write_file(&dir.join("timings.csv"), &self.timings.to_csv())
    }
}

/// One solve on the initial mesh; also writes the estimator report.
pub fn run_solve(cfg: &StudyConfig) -> Result<StudyOutput> {
    let prob = Problem::build(cfg)?;
    let mut run = Runner { cfg, prob: &prob, timings: Timings::default(), rho: None };
    let r = run.evaluate(0, prob.mesh.clone(), prob.coeffs.clone(), cfg.sample_gamma)?;
    run.fields(0, &r)?;
    write_file(&cfg.output_dir.join("estimator.csv"), &r.report.to_csv())?;
    let mut record = base_record(cfg, &prob, "solve");
    record.rows.push(r.row);
    Ok(StudyOutput { record, timings: run.timings })
}

pub fn run_uniform_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let prob = Problem::build(cfg)?;
    let mut run = Runner { cfg, prob: &prob, timings: Timings::default(), rho: None };
    let mut record = base_record(cfg, &prob, StudyKind::UniformConvergence.name());
    let mut mesh = prob.mesh.clone();
    for level in 0..=cfg.refinements {
        if level > 0 {
            mesh = mesh.refine_uniform().at(level, "refine")?;
        }
        let r = run.evaluate(level, mesh.clone(), prob.coeffs.clone(), cfg.sample_gamma)?;
        run.fields(level, &r)?;
        record.rows.push(r.row);
    }
    for (name, y) in [
        ("energy_error", (|r: &Row| r.energy_error) as fn(&Row) -> Option<f64>),
        ("eta", |r| r.eta),
        ("osc", |r| r.osc),
        ("rc_surrogate", |r| r.rc_surrogate),
        ("gamma_total", |r| r.gamma_total),
    ] {
        fit(&mut record, &format!("{name} vs h"), |r| Some(r.h), y);
    }
    Ok(StudyOutput { record, timings: run.timings })
}

/// Elements of `set` whose centroid lies within ten of their own diameters of `point`.
pub fn near_count(mesh: &Mesh, set: &[usize], point: [f64; 2]) -> usize {
    set.iter()
        .filter(|&&k| {
            let c = mesh.centroid(k);
            (c[0] - point[0]).hypot(c[1] - point[1]) <= 10.0 * mesh.h(k)
        })
        .count()
}

pub fn run_adaptive(cfg: &StudyConfig) -> Result<StudyOutput> {
    let prob = Problem::build(cfg)?;
    let mut run = Runner { cfg, prob: &prob, timings: Timings::default(), rho: None };
    let mut record = base_record(cfg, &prob, StudyKind::Adaptive.name());
    record.set_meta("theta_mark", cfg.theta_mark);
    record.set_meta("dof_budget", cfg.dof_budget);
    let mut mesh = prob.mesh.clone();
    for level in 0..=cfg.max_iterations {
        let mut r = run.evaluate(level, mesh.clone(), prob.coeffs.clone(), cfg.sample_gamma)?;
        let last = level == cfg.max_iterations || r.d.n_broken() >= cfg.dof_budget;
        if last {
            // final mesh and fields
            run.fields(level, &r)?;
            record.rows.push(r.row);
            break;
        }
        let marked = dorfler(&r.report.eta_k, cfg.theta_mark);
        r.row.marked = Some(marked.len());
        r.row.marked_near = prob.singular_point().map(|p| near_count(&r.d.mesh, &marked, p));
        mesh = run.timed(level, "refine", || r.d.mesh.refine(&marked)).at(level, "refine")?;
        record.rows.push(r.row);
    }
    fit(&mut record, "energy_error vs dofs", |r| Some(r.dofs as f64), |r| r.energy_error);
    fit(&mut record, "eta vs dofs", |r| Some(r.dofs as f64), |r| r.eta);
    Ok(StudyOutput { record, timings: run.timings })
}

pub fn run_gamma_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    let prob = Problem::build(cfg)?;
    let mut run = Runner { cfg, prob: &prob, timings: Timings::default(), rho: None };
    let mut record = base_record(cfg, &prob, StudyKind::GammaBaScaling.name());
    let mut mesh = prob.mesh.clone();
    for level in 0..=cfg.refinements {
        if level > 0 {
            mesh = mesh.refine_uniform().at(level, "refine")?;
        }
        let mut r = run.evaluate(level, mesh.clone(), prob.coeffs.clone(), true)?;
        r.row.probe = run.probe(level, &r.d)?;
        run.fields(level, &r)?;
        record.rows.push(r.row);
    }
    for (name, y) in [
        ("gamma_check_g", (|r: &Row| r.gamma_check_g) as fn(&Row) -> Option<f64>),
        ("gamma_check_d", |r| r.gamma_check_d),
        ("gamma_tilde_g", |r| r.gamma_tilde_g),
        ("gamma_tilde_d", |r| r.gamma_tilde_d),
        ("gamma_total", |r| r.gamma_total),
    ] {
        fit(&mut record, &format!("{name} vs h"), |r| Some(r.h), y);
    }
    Ok(StudyOutput { record, timings: run.timings })
}

/// `omega` at the discrete eigenvalues (conforming and IPDG pencils with the
/// `mu` mass) inside `[lo, hi]`; empty when the boundary has Robin parts.
pub fn discrete_resonances(d: &Discretization, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if d.forms.robin.nnz() > 0 {
        return Ok(Vec::new());
    }
    let e = &d.spaces.conforming.embed;
    let mut out = Vec::new();
    let pencils = [
        (e.transpose().matmul(&d.forms.stiffness.matmul(e)), e.transpose().matmul(&d.forms.mass_mu.matmul(e))),
        (d.forms.a_h.clone(), d.forms.mass_mu.clone()),
    ];
    for (k, m) in pencils {
        if k.nrows() == 0 || k.nrows() > DENSE_GRAM_LIMIT {
            continue;
        }
        let ev = generalized_eigenvalues(&k.to_dense(), &m.to_dense()).at(0, "resonances")?;
        out.extend(ev.into_iter().filter(|l| *l > 0.0).map(f64::sqrt).filter(|w| (lo..=hi).contains(w)));
    }
    Ok(out)
}

pub fn run_stability_sweep(cfg: &StudyConfig, include_resonances: bool) -> Result<StudyOutput> {
    let prob = Problem::build(cfg)?;
    let mut run = Runner { cfg, prob: &prob, timings: Timings::default(), rho: None };
    let mut record = base_record(cfg, &prob, StudyKind::StabilitySweep.name());
    let mut omegas = cfg.sweep_omegas();
    if include_resonances {
        let d = Discretization::new(prob.mesh.clone(), prob.coeffs.clone(), cfg.p, cfg.dg).at(0, "assemble")?;
        let extra = discrete_resonances(&d, cfg.omega_sweep.0, cfg.omega_sweep.1)?;
        record.set_meta("resonances", extra.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" "));
        omegas.extend(extra);
        omegas.sort_by(f64::total_cmp);
    }
    for (level, &w) in omegas.iter().enumerate() {
        let coeffs = prob.coeffs.with_omega(w).map_err(|e| DriverError::Config(e.to_string()))?;
        let d = Discretization::new(prob.mesh.clone(), coeffs.clone(), cfg.p, cfg.dg).at(level, "assemble")?;
        let probe = run.probe(level, &d)?;
        let row = match run.evaluate(level, prob.mesh.clone(), coeffs.clone(), false) {
            Ok(r) => {
                let mut row = r.row;
                if cfg.sample_gamma {
                    let nw = NormWorkspace::new(&r.d).at(level, "norms")?;
                    let opts = run.gamma_options();
                    match run.timed(level, "gamma", || sample_gamma_ba(&r.d, &nw, &opts)) {
                        Ok(f) => {
                            row.gamma_check_g = Some(f.check_g);
                            row.gamma_check_d = Some(f.check_d);
                            row.gamma_tilde_g = Some(f.tilde_g);
                            row.gamma_tilde_d = Some(f.tilde_d);
                            row.gamma_total = Some(f.total);
                            row.gamma_converged = Some(f.converged());
                        }
                        Err(e) => row.status = format!("dual_{}", classify(&e)),
                    }
                }
                row
            }
            Err(DriverError::Stage { stage: "solve", source, .. }) => {
                let mut row = Row::ok(level, w);
                row.h = d.mesh.h_max();
                row.triangles = d.mesh.n_triangles();
                row.dofs = d.n_broken();
                if let HelmError::NearSingular { condition, .. } = &source {
                    row.condition = Some(*condition);
                }
                row.status = classify(&source).to_string();
                row
            }
            Err(e) => return Err(e),
        };
        record.rows.push(Row { probe, ..row });
    }
    Ok(StudyOutput { record, timings: run.timings })
}

/// Runs the study selected by the configuration.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyOutput> {
    match cfg.kind {
        StudyKind::UniformConvergence => run_uniform_study(cfg),
        StudyKind::Adaptive => run_adaptive(cfg),
        StudyKind::GammaBaScaling => run_gamma_study(cfg),
        StudyKind::StabilitySweep => run_stability_sweep(cfg, cfg.resonances),
    }
}
