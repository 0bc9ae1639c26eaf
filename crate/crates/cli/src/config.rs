//! Study configuration: a line-oriented `key = value` file with sections.
//!
//! ```text
//! [domain]
//! preset = unit_square        # unit_square | l_shape | file; default: the case's own domain
//! file = mesh.txt             # with preset = file; relative to the config file
//! n = 4                       # cells per unit length of the initial mesh
//! boundary = robin            # dirichlet | neumann | robin | D,R,N,R (left,right,bottom,top); default: the case's labels
//! interface_x = 0.5           # optional: region 1 is x > interface_x
//!
//! [coefficients]
//! omega = 5
//! mu = 1                      # one value per region, comma separated
//! a = 1                       # per region: alpha, or "a11 a12 a22"; regions comma separated
//! gamma = 1                   # per Robin patch
//!
//! [problem]
//! case = plane_wave           # plane_wave | corner_singular | constant | quadratic | smooth_sine | source
//! direction = 0.6, 0.8        # plane_wave only
//! source = 1, 0               # case = source: constant f (re, im)
//! cutoff = 0.45, 0.95         # corner_singular: cutoff radii r0, r1, or none (Robin outer boundary)
//!
//! [discretization]
//! p = 1
//! beta0 = 10
//! stabilization = lifted      # lifted | pure_jump
//! raised_lift = false
//!
//! [study]
//! kind = uniform_convergence  # uniform_convergence | adaptive | gamma_ba_scaling | stability_sweep
//! refinements = 4
//! dof_budget = 20000
//! max_iterations = 40
//! theta_mark = 0.5
//! gamma = false               # sample approximation factors in convergence studies
//! omega_min = 4.0             # stability_sweep
//! omega_max = 5.0
//! omega_samples = 11
//! resonances = false         # also sample at discrete eigenvalues in range (Dirichlet/Neumann only)
//! seed = 1
//!
//! [output]
//! dir = out
//! fields = true
//! ```
//!
//! Full-line comments start with `#` or `;`. Unknown sections and keys are errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use helmdg_core::basis::MAX_DEGREE;
use helmdg_core::coeffs::Mat2;
use helmdg_core::dg::{DgOptions, Stabilization};
use helmdg_core::manufactured::CaseKind;
use helmdg_core::mesh::BoundaryKind;
use helmdg_core::C64;
use ini::Ini;

use crate::error::{DriverError, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DomainPreset {
    UnitSquare,
    LShape,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundarySpec {
    Uniform(BoundaryKind),
    /// `[left, right, bottom, top]` of the bounding box.
    Sides([BoundaryKind; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    UniformConvergence,
    Adaptive,
    GammaBaScaling,
    StabilitySweep,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::UniformConvergence => "uniform_convergence",
            Self::Adaptive => "adaptive",
            Self::GammaBaScaling => "gamma_ba_scaling",
            Self::StabilitySweep => "stability_sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemSpec {
    Manufactured(CaseKind),
    /// Constant source, homogeneous boundary data; no exact solution.
    Source(C64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    /// `None`: the natural domain of the manufactured case (unit square otherwise).
    pub domain: Option<DomainPreset>,
    pub n: usize,
    /// `None`: the case's own labels (all Robin otherwise).
    pub boundary: Option<BoundarySpec>,
    pub interface_x: Option<f64>,
    pub mu: Vec<f64>,
    pub a: Vec<Mat2>,
    pub gamma: Vec<f64>,
    pub omega: f64,
    pub problem: ProblemSpec,
    pub p: usize,
    pub dg: DgOptions,
    pub kind: StudyKind,
    pub refinements: usize,
    pub dof_budget: usize,
    pub max_iterations: usize,
    pub theta_mark: f64,
    pub sample_gamma: bool,
    pub omega_sweep: (f64, f64, usize),
    pub resonances: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub write_fields: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            domain: None,
            n: 4,
            boundary: None,
            interface_x: None,
            mu: vec![1.0],
            a: vec![[[1.0, 0.0], [0.0, 1.0]]],
            gamma: vec![1.0],
            omega: 5.0,
            problem: ProblemSpec::Manufactured(CaseKind::PlaneWave { direction: [0.6, 0.8] }),
            p: 1,
            dg: DgOptions::default(),
            kind: StudyKind::UniformConvergence,
            refinements: 4,
            dof_budget: 20_000,
            max_iterations: 40,
            theta_mark: 0.5,
            sample_gamma: false,
            omega_sweep: (4.0, 5.0, 11),
            resonances: false,
            seed: 1,
            output_dir: PathBuf::from("out"),
            write_fields: true,
        }
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("domain", &["preset", "file", "n", "boundary", "interface_x"]),
    ("coefficients", &["omega", "mu", "a", "gamma"]),
    ("problem", &["case", "direction", "source", "cutoff"]),
    ("discretization", &["p", "beta0", "stabilization", "raised_lift"]),
    (
        "study",
        &[
            "kind",
            "refinements",
            "dof_budget",
            "max_iterations",
            "theta_mark",
            "gamma",
            "omega_min",
            "omega_max",
            "omega_samples",
            "resonances",
            "seed",
        ],
    ),
    ("output", &["dir", "fields"]),
];

fn bad(msg: impl Into<String>) -> DriverError {
    DriverError::Config(msg.into())
}

struct Reader<'a> {
    ini: &'a Ini,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.ini.get_from(Some(section), key).map(str::trim)
    }

    fn parse<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(s) => s
                .parse()
                .map(Some)
                .map_err(|_| bad(format!("[{section}] {key}: cannot parse '{s}'"))),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(s) = self.raw(section, key) else {
            return Ok(None);
        };
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| bad(format!("[{section}] {key}: cannot parse '{t}'"))))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn flag(&self, section: &str, key: &str) -> Result<Option<bool>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some("true" | "yes" | "on" | "1") => Ok(Some(true)),
            Some("false" | "no" | "off" | "0") => Ok(Some(false)),
            Some(s) => Err(bad(format!("[{section}] {key}: expected a boolean, got '{s}'"))),
        }
    }
}

fn boundary_kind(s: &str) -> Option<BoundaryKind> {
    match s.to_ascii_lowercase().as_str() {
        "d" | "dirichlet" => Some(BoundaryKind::Dirichlet),
        "n" | "neumann" => Some(BoundaryKind::Neumann),
        "r" | "robin" => Some(BoundaryKind::Robin),
        _ => None,
    }
}

fn parse_boundary(s: &str) -> Result<BoundarySpec> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let kinds: Option<Vec<BoundaryKind>> = parts.iter().map(|p| boundary_kind(p)).collect();
    match (kinds, parts.len()) {
        (Some(k), 1) => Ok(BoundarySpec::Uniform(k[0])),
        (Some(k), 4) => Ok(BoundarySpec::Sides([k[0], k[1], k[2], k[3]])),
        _ => Err(bad(format!("[domain] boundary: expected one kind or four (left,right,bottom,top), got '{s}'"))),
    }
}

fn parse_tensors(s: &str) -> Result<Vec<Mat2>> {
    s.split(',')
        .map(|region| {
            let v: Vec<f64> = region
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("[coefficients] a: cannot parse '{t}'"))))
                .collect::<Result<_>>()?;
            match v.as_slice() {
                [a] => Ok([[*a, 0.0], [0.0, *a]]),
                [a, b, c] => Ok([[*a, *b], [*b, *c]]),
                _ => Err(bad(format!("[coefficients] a: expected alpha or 'a11 a12 a22', got '{}'", region.trim()))),
            }
        })
        .collect()
}

impl StudyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses configuration text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| bad(format!("syntax: {e}")))?;
        for (section, props) in ini.iter() {
            let Some(name) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(bad(format!("key '{k}' outside any section")));
                }
                continue;
            };
            let Some((_, keys)) = KEYS.iter().find(|(s, _)| *s == name) else {
                return Err(bad(format!("unknown section [{name}]")));
            };
            let allowed: BTreeSet<&str> = keys.iter().copied().collect();
            if let Some((k, _)) = props.iter().find(|(k, _)| !allowed.contains(k)) {
                return Err(bad(format!("unknown key '{k}' in [{name}]")));
            }
        }
        let r = Reader { ini: &ini };
        let mut c = Self::default();

        match r.raw("domain", "preset") {
            None => {}
            Some("unit_square") => c.domain = Some(DomainPreset::UnitSquare),
            Some("l_shape") => c.domain = Some(DomainPreset::LShape),
            Some("file") => {
                let f = r.raw("domain", "file").ok_or_else(|| bad("[domain] preset = file needs 'file'"))?;
                c.domain = Some(DomainPreset::File(base.join(f)));
            }
            Some(s) => return Err(bad(format!("[domain] preset: unknown '{s}'"))),
        }
        if let Some(n) = r.parse("domain", "n")? {
            c.n = n;
        }
        if let Some(s) = r.raw("domain", "boundary") {
            c.boundary = Some(parse_boundary(s)?);
        }
        c.interface_x = r.parse("domain", "interface_x")?;

        if let Some(w) = r.parse("coefficients", "omega")? {
            c.omega = w;
        }
        if let Some(mu) = r.list("coefficients", "mu")? {
            c.mu = mu;
        }
        if let Some(s) = r.raw("coefficients", "a") {
            c.a = parse_tensors(s)?;
        }
        if let Some(g) = r.list("coefficients", "gamma")? {
            c.gamma = g;
        }
        // a single value applies to every region
        let regions = c.mu.len().max(c.a.len());
        if c.mu.len() == 1 {
            c.mu = vec![c.mu[0]; regions];
        }
        if c.a.len() == 1 {
            c.a = vec![c.a[0]; regions];
        }

        match r.raw("problem", "case") {
            None => {}
            Some("source") => {
                let v = r.list("problem", "source")?.unwrap_or_else(|| vec![1.0]);
                let value = match v.as_slice() {
                    [re] => C64::new(*re, 0.0),
                    [re, im] => C64::new(*re, *im),
                    _ => return Err(bad("[problem] source: expected 're' or 're, im'")),
                };
                c.problem = ProblemSpec::Source(value);
            }
            Some(name) => {
                let mut kind = CaseKind::from_name(name).map_err(|e| bad(format!("[problem] case: {e}")))?;
                if let (CaseKind::PlaneWave { direction }, Some(d)) = (&mut kind, r.list("problem", "direction")?) {
                    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if d.len() != 2 || !(norm > 0.0) {
                        return Err(bad("[problem] direction: expected a nonzero 2-vector"));
                    }
                    *direction = [d[0] / norm, d[1] / norm];
                }
                if let (CaseKind::CornerSingular { r0, r1, .. }, Some(c)) = (&mut kind, r.raw("problem", "cutoff")) {
                    if c == "none" {
                        (*r0, *r1) = (f64::INFINITY, f64::INFINITY);
                    } else {
                        match r.list("problem", "cutoff")?.as_deref() {
                            Some(&[a, b]) if 0.0 < a && a < b => (*r0, *r1) = (a, b),
                            _ => return Err(bad("[problem] cutoff: expected 'none' or 'r0, r1' with 0 < r0 < r1")),
                        }
                    }
                }
                c.problem = ProblemSpec::Manufactured(kind);
            }
        }

        if let Some(p) = r.parse("discretization", "p")? {
            c.p = p;
        }
        if let Some(b) = r.parse("discretization", "beta0")? {
            c.dg.beta0 = b;
        }
        match r.raw("discretization", "stabilization") {
            None | Some("lifted") => {}
            Some("pure_jump") => c.dg.stabilization = Stabilization::PureJump,
            Some(s) => return Err(bad(format!("[discretization] stabilization: unknown '{s}'"))),
        }
        if let Some(f) = r.flag("discretization", "raised_lift")? {
            c.dg.raised_lift = f;
        }

        c.kind = match r.raw("study", "kind") {
            None | Some("uniform_convergence") => StudyKind::UniformConvergence,
            Some("adaptive") => StudyKind::Adaptive,
            Some("gamma_ba_scaling") => StudyKind::GammaBaScaling,
            Some("stability_sweep") => StudyKind::StabilitySweep,
            Some(s) => return Err(bad(format!("[study] kind: unknown '{s}'"))),
        };
        if let Some(v) = r.parse("study", "refinements")? {
            c.refinements = v;
        }
        if let Some(v) = r.parse("study", "dof_budget")? {
            c.dof_budget = v;
        }
        if let Some(v) = r.parse("study", "max_iterations")? {
            c.max_iterations = v;
        }
        if let Some(v) = r.parse("study", "theta_mark")? {
            c.theta_mark = v;
        }
        if let Some(v) = r.flag("study", "gamma")? {
            c.sample_gamma = v;
        }
        if let Some(v) = r.parse("study", "omega_min")? {
            c.omega_sweep.0 = v;
        }
        if let Some(v) = r.parse("study", "omega_max")? {
            c.omega_sweep.1 = v;
        }
        if let Some(v) = r.parse("study", "omega_samples")? {
            c.omega_sweep.2 = v;
        }
        if let Some(v) = r.flag("study", "resonances")? {
            c.resonances = v;
        }
        if let Some(v) = r.parse("study", "seed")? {
            c.seed = v;
        }

        if let Some(d) = r.raw("output", "dir") {
            c.output_dir = base.join(d);
        }
        if let Some(f) = r.flag("output", "fields")? {
            c.write_fields = f;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(format!("{name} must be positive, got {v}")))
            }
        };
        positive("omega", self.omega)?;
        positive("beta0", self.dg.beta0)?;
        for &m in &self.mu {
            positive("mu", m)?;
        }
        for &g in &self.gamma {
            positive("gamma", g)?;
        }
        for a in &self.a {
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if !(a[0][0] > 0.0 && det > 0.0) {
                return Err(bad(format!("A = {a:?} is not positive definite")));
            }
        }
        if self.mu.len() != self.a.len() {
            return Err(bad(format!("{} values of mu but {} of A", self.mu.len(), self.a.len())));
        }
        if self.interface_x.is_some() && self.mu.len() != 2 {
            return Err(bad("interface_x splits the domain into two regions; give two mu/A values"));
        }
        if self.n == 0 {
            return Err(bad("n must be at least 1"));
        }
        // approximation factors use a reference space of degree p + 1
        if self.p == 0 || self.p >= MAX_DEGREE {
            return Err(bad(format!("p must be in 1..{MAX_DEGREE}, got {}", self.p)));
        }
        if !(self.theta_mark > 0.0 && self.theta_mark < 1.0) {
            return Err(bad(format!("theta_mark must lie in (0, 1), got {}", self.theta_mark)));
        }
        let (lo, hi, n) = self.omega_sweep;
        if self.kind == StudyKind::StabilitySweep {
            positive("omega_min", lo)?;
            if !(hi >= lo) || n == 0 {
                return Err(bad("stability sweep needs 0 < omega_min <= omega_max and omega_samples >= 1"));
            }
        }
        Ok(())
    }

    /// Frequencies of the stability sweep, evenly spaced.
    pub fn sweep_omegas(&self) -> Vec<f64> {
        let (lo, hi, n) = self.omega_sweep;
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let text = "[domain]\npreset = l_shape\nn = 2\nboundary = dirichlet\n\n[coefficients]\nomega = 2.5\na = 1 0.1 2\n\n[study]\nkind = adaptive\ntheta_mark = 0.4\n[output]\ndir = res\n";
        let c = StudyConfig::parse(text, Path::new("/tmp/x")).unwrap();
        assert_eq!(c.domain, Some(DomainPreset::LShape));
        assert_eq!(c.boundary, Some(BoundarySpec::Uniform(BoundaryKind::Dirichlet)));
        assert_eq!(c.a, vec![[[1.0, 0.1], [0.1, 2.0]]]);
        assert_eq!(c.kind, StudyKind::Adaptive);
        assert_eq!(c.output_dir, PathBuf::from("/tmp/x/res"));
        assert_eq!(c.p, 1);
    }

    #[test]
    fn sides_and_regions() {
        let text = "[domain]\nboundary = D, R, N, R\ninterface_x = 0.5\n[coefficients]\nmu = 1, 2\na = 1, 3\n[problem]\ncase = source\nsource = 1, -1\n";
        let c = StudyConfig::parse(text, Path::new(".")).unwrap();
        assert_eq!(
            c.boundary,
            Some(BoundarySpec::Sides([
                BoundaryKind::Dirichlet,
                BoundaryKind::Robin,
                BoundaryKind::Neumann,
                BoundaryKind::Robin
            ]))
        );
        assert_eq!(c.mu, vec![1.0, 2.0]);
        assert_eq!(c.problem, ProblemSpec::Source(C64::new(1.0, -1.0)));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            "[coefficients]\nomega = -1\n",
            "[study]\ntheta_mark = 1.5\n",
            "[study]\nkind = everything\n",
            "[mystery]\nx = 1\n",
            "[domain]\ncolour = blue\n",
            "[domain]\nn = four\n",
            "[discretization]\np = 0\n",
            "[problem]\ncase = bessel\n",
            "[coefficients]\na = 1 2\n",
        ] {
            assert!(matches!(StudyConfig::parse(text, Path::new(".")), Err(DriverError::Config(_))), "{text}");
        }
    }

    #[test]
    fn sweep_is_inclusive() {
        let c = StudyConfig { omega_sweep: (1.0, 2.0, 5), ..Default::default() };
        assert_eq!(c.sweep_omegas(), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }
}
