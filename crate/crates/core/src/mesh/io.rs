//! Plain-text mesh format.
//!
//! ```text
//! helmdg-mesh v1
//! <vertex count>
//! x y
//! <triangle count>
//! a b c region
//! <boundary edge count>
//! a b D|N|R patch
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{BoundaryEdge, BoundaryKind, Mesh};
use crate::error::{HelmError, Result};

const HEADER: &str = "helmdg-mesh v1";

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    writeln!(s, "{HEADER}").unwrap();
    writeln!(s, "{}", mesh.vertices.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(s, "{} {}", v[0], v[1]).unwrap();
    }
    writeln!(s, "{}", mesh.triangles.len()).unwrap();
    for (t, r) in mesh.triangles.iter().zip(&mesh.regions) {
        writeln!(s, "{} {} {} {}", t[0], t[1], t[2], r).unwrap();
    }
    writeln!(s, "{}", mesh.boundary.len()).unwrap();
    for e in &mesh.boundary {
        writeln!(s, "{} {} {} {}", e.a, e.b, e.kind.letter(), e.patch).unwrap();
    }
    s
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next_record(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (n, line) in self.inner.by_ref() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            return Ok((n + 1, line.split_whitespace().collect()));
        }
        Err(HelmError::Parse(format!("unexpected end of mesh file, expected {what}")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (n, f) = self.next_record(what)?;
        if f.len() != 1 {
            return Err(HelmError::Parse(format!("line {n}: expected {what}")));
        }
        f[0].parse()
            .map_err(|_| HelmError::Parse(format!("line {n}: bad {what} '{}'", f[0])))
    }
}

fn field<T: std::str::FromStr>(f: &[&str], i: usize, line: usize) -> Result<T> {
    f.get(i)
        .ok_or_else(|| HelmError::Parse(format!("line {line}: missing field {}", i + 1)))?
        .parse()
        .map_err(|_| HelmError::Parse(format!("line {line}: bad field '{}'", f[i])))
}

pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut lines = Lines { inner: text.lines().enumerate() };
    let (n, head) = lines.next_record("header")?;
    if head.join(" ") != HEADER {
        return Err(HelmError::Parse(format!("line {n}: expected '{HEADER}'")));
    }
    let nv = lines.count("vertex count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (n, f) = lines.next_record("vertex")?;
        vertices.push([field(&f, 0, n)?, field(&f, 1, n)?]);
    }
    let nt = lines.count("triangle count")?;
    let mut triangles = Vec::with_capacity(nt);
    let mut regions = Vec::with_capacity(nt);
    for _ in 0..nt {
        let (n, f) = lines.next_record("triangle")?;
        triangles.push([field(&f, 0, n)?, field(&f, 1, n)?, field(&f, 2, n)?]);
        regions.push(field(&f, 3, n)?);
    }
    let nb = lines.count("boundary edge count")?;
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (n, f) = lines.next_record("boundary edge")?;
        let kind = f
            .get(2)
            .and_then(|s| BoundaryKind::from_letter(s))
            .ok_or_else(|| HelmError::Parse(format!("line {n}: boundary label must be D, N or R")))?;
        boundary.push(BoundaryEdge {
            a: field(&f, 0, n)?,
            b: field(&f, 1, n)?,
            kind,
            patch: field(&f, 3, n)?,
        });
    }
    Mesh::build(vertices, triangles, regions, boundary)
}

impl Mesh {
    pub fn load(path: &Path) -> Result<Mesh> {
        let text = std::fs::read_to_string(path).map_err(|source| HelmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        read_mesh(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, write_mesh(self)).map_err(|source| HelmError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
