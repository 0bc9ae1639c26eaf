//! Mesh and per-element field samples for external visualization.
//!
//! A field file has one row per (element, sample): the three vertices
//! followed by the three edge midpoints of every element.
//!
//! | column | meaning |
//! |---|---|
//! | `element` | element id in the accompanying mesh file |
//! | `sample` | 0-2 vertices, 3-5 midpoints of edges (0,1), (1,2), (2,0) |
//! | `x`, `y` | physical coordinates |
//! | `re`, `im` | `u_h` at the sample (element-side trace) |
//! | `eta_k` | estimator contribution of the element |

use std::fmt::Write as _;
use std::path::Path;

use helmdg_core::dg::Discretization;
use helmdg_core::mesh::write_mesh;
use helmdg_core::spaces::eval_broken;
use helmdg_core::C64;

use crate::error::{DriverError, Result};
use crate::record::SCHEMA_VERSION;

pub const SAMPLES: [[f64; 2]; 6] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]];

pub fn field_csv(d: &Discretization, uh: &[C64], eta_k: &[f64]) -> String {
    let mut s = format!("# schema_version = {SCHEMA_VERSION}\nelement,sample,x,y,re,im,eta_k\n");
    for k in 0..d.mesh.n_triangles() {
        let map = d.mesh.element_map(k);
        for (i, &xi) in SAMPLES.iter().enumerate() {
            let x = map.to_physical(xi);
            let v = eval_broken(&d.tab.basis, d.p, uh, k, xi);
            writeln!(s, "{k},{i},{},{},{},{},{}", x[0], x[1], v.re, v.im, eta_k[k]).unwrap();
        }
    }
    s
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| DriverError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, text).map_err(|source| DriverError::Io { path: path.display().to_string(), source })
}

/// Writes `<stem>.mesh` and `<stem>.csv` into `dir`.
pub fn emit_fields(dir: &Path, stem: &str, d: &Discretization, uh: &[C64], eta_k: &[f64]) -> Result<()> {
    write_file(&dir.join(format!("{stem}.mesh")), &write_mesh(&d.mesh))?;
    write_file(&dir.join(format!("{stem}.csv")), &field_csv(d, uh, eta_k))
}
