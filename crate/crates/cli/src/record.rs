//! Per-mesh result rows and their CSV form.
//!
//! Every file starts with `#`-prefixed `key = value` lines (the first is
//! `schema_version`), followed by a header row and one row per mesh, sample or
//! iteration. Missing values are empty cells; floats are written in shortest
//! round-trip form, so reading a file back reproduces the record exactly.
//!
//! | column | meaning |
//! |---|---|
//! | `level` | mesh index (refinement level, adaptive iteration or sweep sample) |
//! | `omega` | frequency |
//! | `h` | largest element diameter |
//! | `triangles` | number of elements |
//! | `dofs` | dimension of the broken space |
//! | `energy_error` | broken energy norm of `u - u_h` |
//! | `l2_mu_error` | `mu`-weighted L2 norm of `u - u_h` |
//! | `robin_error` | `gamma`-weighted L2 norm of `u - u_h` on the Robin boundary |
//! | `eta` | residual estimator |
//! | `rc_surrogate` | `u_h - J u_h` in the mesh-dependent H1 norm |
//! | `rc_bound` | jump bound on the non-conformity |
//! | `osc` | data oscillation |
//! | `effectivity` | `eta / energy_error` (1 when both vanish) |
//! | `efficiency_max` | max over elements of `eta_K / (patch error + patch oscillation)` |
//! | `best_approx` | best approximation of `u` from the conforming space, mesh-dependent H1 norm |
//! | `quasi_opt` | `energy_error / best_approx` |
//! | `flux_best_approx` | best approximation of `A grad u` from BDM, mesh-dependent H(div) norm |
//! | `apriori_ratio` | `energy_error / (best_approx + flux_best_approx / rho)` |
//! | `rho` | coercivity margin of the stabilization (square root) |
//! | `rho_measured` | 1 if `rho` was computed on this mesh, 0 if carried over from a coarser one |
//! | `gamma_check_g`, `gamma_check_d`, `gamma_tilde_g`, `gamma_tilde_d` | sampled approximation factors |
//! | `gamma_total` | combined approximation factor |
//! | `gamma_converged` | 1 if every maximization converged |
//! | `reliability_index` | `eta (1 + gamma_total^2)^(1/2) / energy_error` |
//! | `energy_ratio` | `energy_error / ((1 + gamma_total^2)^(1/2) R)`, `R = (eta^2 + rc_surrogate^2)^(1/2)` |
//! | `l2_ratio` | `omega l2_mu_error / (gamma_check R)` |
//! | `robin_ratio` | `omega^(1/2) robin_error / (gamma_tilde R)` |
//! | `probe` | discrete inf-sup constant of the conforming problem |
//! | `condition` | condition estimate of the IPDG system |
//! | `marked` | elements marked for refinement (adaptive) |
//! | `marked_near` | marked elements within ten of their own diameters of the singular point |
//! | `status` | `ok`, or the failure class of the solve (`near_singular`, `numerical`) |

use std::fmt::Write as _;

use crate::error::{DriverError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Row {
    pub level: usize,
    pub omega: f64,
    pub h: f64,
    pub triangles: usize,
    pub dofs: usize,
    pub energy_error: Option<f64>,
    pub l2_mu_error: Option<f64>,
    pub robin_error: Option<f64>,
    pub eta: Option<f64>,
    pub rc_surrogate: Option<f64>,
    pub rc_bound: Option<f64>,
    pub osc: Option<f64>,
    pub effectivity: Option<f64>,
    pub efficiency_max: Option<f64>,
    pub best_approx: Option<f64>,
    pub quasi_opt: Option<f64>,
    pub flux_best_approx: Option<f64>,
    pub apriori_ratio: Option<f64>,
    pub rho: Option<f64>,
    pub rho_measured: Option<bool>,
    pub gamma_check_g: Option<f64>,
    pub gamma_check_d: Option<f64>,
    pub gamma_tilde_g: Option<f64>,
    pub gamma_tilde_d: Option<f64>,
    pub gamma_total: Option<f64>,
    pub gamma_converged: Option<bool>,
    pub reliability_index: Option<f64>,
    pub energy_ratio: Option<f64>,
    pub l2_ratio: Option<f64>,
    pub robin_ratio: Option<f64>,
    pub probe: Option<f64>,
    pub condition: Option<f64>,
    pub marked: Option<usize>,
    pub marked_near: Option<usize>,
    pub status: String,
}

pub const COLUMNS: [&str; 35] = [
    "level",
    "omega",
    "h",
    "triangles",
    "dofs",
    "energy_error",
    "l2_mu_error",
    "robin_error",
    "eta",
    "rc_surrogate",
    "rc_bound",
    "osc",
    "effectivity",
    "efficiency_max",
    "best_approx",
    "quasi_opt",
    "flux_best_approx",
    "apriori_ratio",
    "rho",
    "rho_measured",
    "gamma_check_g",
    "gamma_check_d",
    "gamma_tilde_g",
    "gamma_tilde_d",
    "gamma_total",
    "gamma_converged",
    "reliability_index",
    "energy_ratio",
    "l2_ratio",
    "robin_ratio",
    "probe",
    "condition",
    "marked",
    "marked_near",
    "status",
];

fn f(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn u(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn b(x: Option<bool>) -> String {
    x.map(|v| if v { "1" } else { "0" }.to_string()).unwrap_or_default()
}

fn parse_err(line: usize, col: &str, s: &str) -> DriverError {
    DriverError::Config(format!("record line {line}: column {col}: cannot parse '{s}'"))
}

struct Cells<'a> {
    cells: Vec<&'a str>,
    line: usize,
    next: usize,
}

impl<'a> Cells<'a> {
    fn take(&mut self) -> (&'a str, &'static str) {
        let i = self.next;
        self.next += 1;
        (self.cells[i], COLUMNS[i])
    }

    fn req<T: std::str::FromStr>(&mut self) -> Result<T> {
        let (s, c) = self.take();
        s.parse().map_err(|_| parse_err(self.line, c, s))
    }

    fn opt<T: std::str::FromStr>(&mut self) -> Result<Option<T>> {
        let (s, c) = self.take();
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| parse_err(self.line, c, s))
    }

    fn flag(&mut self) -> Result<Option<bool>> {
        let (s, c) = self.take();
        match s {
            "" => Ok(None),
            "1" => Ok(Some(true)),
            "0" => Ok(Some(false)),
            _ => Err(parse_err(self.line, c, s)),
        }
    }
}

impl Row {
    pub fn ok(level: usize, omega: f64) -> Self {
        Self { level, omega, status: "ok".into(), ..Default::default() }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.level.to_string(),
            self.omega.to_string(),
            self.h.to_string(),
            self.triangles.to_string(),
            self.dofs.to_string(),
            f(self.energy_error),
            f(self.l2_mu_error),
            f(self.robin_error),
            f(self.eta),
            f(self.rc_surrogate),
            f(self.rc_bound),
            f(self.osc),
            f(self.effectivity),
            f(self.efficiency_max),
            f(self.best_approx),
            f(self.quasi_opt),
            f(self.flux_best_approx),
            f(self.apriori_ratio),
            f(self.rho),
            b(self.rho_measured),
            f(self.gamma_check_g),
            f(self.gamma_check_d),
            f(self.gamma_tilde_g),
            f(self.gamma_tilde_d),
            f(self.gamma_total),
            b(self.gamma_converged),
            f(self.reliability_index),
            f(self.energy_ratio),
            f(self.l2_ratio),
            f(self.robin_ratio),
            f(self.probe),
            f(self.condition),
            u(self.marked),
            u(self.marked_near),
            self.status.clone(),
        ]
    }

    fn from_cells(c: &mut Cells<'_>) -> Result<Self> {
        Ok(Self {
            level: c.req()?,
            omega: c.req()?,
            h: c.req()?,
            triangles: c.req()?,
            dofs: c.req()?,
            energy_error: c.opt()?,
            l2_mu_error: c.opt()?,
            robin_error: c.opt()?,
            eta: c.opt()?,
            rc_surrogate: c.opt()?,
            rc_bound: c.opt()?,
            osc: c.opt()?,
            effectivity: c.opt()?,
            efficiency_max: c.opt()?,
            best_approx: c.opt()?,
            quasi_opt: c.opt()?,
            flux_best_approx: c.opt()?,
            apriori_ratio: c.opt()?,
            rho: c.opt()?,
            rho_measured: c.flag()?,
            gamma_check_g: c.opt()?,
            gamma_check_d: c.opt()?,
            gamma_tilde_g: c.opt()?,
            gamma_tilde_d: c.opt()?,
            gamma_total: c.opt()?,
            gamma_converged: c.flag()?,
            reliability_index: c.opt()?,
            energy_ratio: c.opt()?,
            l2_ratio: c.opt()?,
            robin_ratio: c.opt()?,
            probe: c.opt()?,
            condition: c.opt()?,
            marked: c.opt()?,
            marked_near: c.opt()?,
            status: c.take().0.to_string(),
        })
    }
}

/// Rows of one study with the `# key = value` metadata written above them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceRecord {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

impl ConvergenceRecord {
    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Values of one column over the rows where it is present.
    pub fn column(&self, pick: impl Fn(&Row) -> Option<f64>) -> Vec<f64> {
        self.rows.iter().filter_map(pick).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# schema_version = {SCHEMA_VERSION}").unwrap();
        for (k, v) in &self.meta {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        writeln!(s, "{}", COLUMNS.join(",")).unwrap();
        for r in &self.rows {
            writeln!(s, "{}", r.cells().join(",")).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut out = Self::default();
        let mut header = false;
        for (n, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                let Some((k, v)) = rest.split_once('=') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                if k == "schema_version" {
                    if v != SCHEMA_VERSION.to_string() {
                        return Err(DriverError::Config(format!("unsupported record schema version {v}")));
                    }
                } else {
                    out.meta.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if !header {
                if line != COLUMNS.join(",") {
                    return Err(DriverError::Config(format!("record line {}: unexpected header", n + 1)));
                }
                header = true;
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != COLUMNS.len() {
                return Err(DriverError::Config(format!(
                    "record line {}: expected {} cells, got {}",
                    n + 1,
                    COLUMNS.len(),
                    cells.len()
                )));
            }
            out.rows.push(Row::from_cells(&mut Cells { cells, line: n + 1, next: 0 })?);
        }
        Ok(out)
    }
}

/// Wall-clock seconds per stage and mesh; kept out of the record so that
/// records are reproducible byte for byte.
#[derive(Debug, Clone, Default)]
pub struct Timings {
    pub rows: Vec<(usize, &'static str, f64)>,
}

impl Timings {
    pub fn add(&mut self, level: usize, stage: &'static str, seconds: f64) {
        self.rows.push((level, stage, seconds));
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema_version = {SCHEMA_VERSION}\nlevel,stage,seconds\n");
        for (l, st, t) in &self.rows {
            writeln!(s, "{l},{st},{t:.6}").unwrap();
        }
        s
    }
}
