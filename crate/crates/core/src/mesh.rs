//! Matching triangular meshes with labelled boundaries, coefficient regions and
//! newest-vertex bisection.
//!
//! Faces are stored once, keyed by their sorted vertex pair. An interior face
//! is owned by `[lower id, higher id]`; its normal points out of the lower-id
//! triangle, so the jump across it is `trace(lower) - trace(higher)`.
//! Boundary normals point out of the domain.

use std::collections::{BTreeMap, BTreeSet};

use crate::basis::ElementMap;
use crate::error::{HelmError, Result};

mod io;
mod presets;

pub use io::{read_mesh, write_mesh};
pub use presets::{l_shape, reentrant_sides, square_sides, uniform_label, unit_square, BoundaryRule};

/// Area and coincidence tolerance on unit-scale geometry.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Robin,
}

impl BoundaryKind {
    pub fn letter(self) -> char {
        match self {
            BoundaryKind::Dirichlet => 'D',
            BoundaryKind::Neumann => 'N',
            BoundaryKind::Robin => 'R',
        }
    }

    pub fn from_letter(s: &str) -> Option<Self> {
        match s {
            "D" => Some(BoundaryKind::Dirichlet),
            "N" => Some(BoundaryKind::Neumann),
            "R" => Some(BoundaryKind::Robin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary(BoundaryKind),
}

/// Labelled boundary edge as given on input. The patch id is only
/// meaningful on Robin edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub kind: BoundaryKind,
    pub patch: usize,
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Sorted vertex pair; the face parameter runs from `vertices[0]` to `vertices[1]`.
    pub vertices: [usize; 2],
    /// `[K+, K-]`; `K-` is `None` on the boundary.
    pub owners: [Option<usize>; 2],
    /// Local edge index of the face in each owner.
    pub local: [usize; 2],
    pub kind: FaceKind,
    pub patch: Option<usize>,
    /// Unit normal `n_F` (outward from `K+`).
    pub normal: [f64; 2],
    pub length: f64,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.kind == FaceKind::Interior
    }

    pub fn boundary_kind(&self) -> Option<BoundaryKind> {
        match self.kind {
            FaceKind::Boundary(k) => Some(k),
            FaceKind::Interior => None,
        }
    }

    pub fn plus(&self) -> usize {
        self.owners[0].expect("every face has an owner")
    }

    /// `n_K . n_F` for owner slot 0 or 1.
    pub fn sign(&self, slot: usize) -> f64 {
        if slot == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<usize>,
    ref_edge: Vec<usize>,
    parent: Vec<Option<usize>>,
    faces: Vec<Face>,
    tri_faces: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Local edge `j` of a triangle is the one opposite vertex `j`.
pub fn local_edge(t: &[usize; 3], j: usize) -> (usize, usize) {
    (t[(j + 1) % 3], t[(j + 2) % 3])
}

fn signed_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Builds a mesh from explicit boundary labels.
    pub fn build(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<usize>,
        boundary: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        Self::assemble(vertices, triangles, regions, None, vec![], boundary, true)
    }

    /// Builds a mesh, labelling boundary edges with `rule(midpoint, outward normal)`.
    pub fn build_with_rule(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<usize>,
        rule: &BoundaryRule,
    ) -> Result<Self> {
        // first pass without labels to find boundary edges and their normals
        let (triangles, _) = orient(&vertices, triangles)?;
        let mut count: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
        for t in &triangles {
            for j in 0..3 {
                let (a, b) = local_edge(t, j);
                let e = count.entry(edge_key(a, b)).or_insert((0, 0));
                e.0 += 1;
                e.1 = a;
            }
        }
        let mut boundary = Vec::new();
        for (&(lo, hi), &(n, from)) in &count {
            if n != 1 {
                continue;
            }
            let to = if from == lo { hi } else { lo };
            let (pa, pb) = (vertices[from], vertices[to]);
            let len = dist(pa, pb);
            let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let (kind, patch) = rule(mid, normal).ok_or_else(|| {
                HelmError::Specification(format!(
                    "boundary edge ({lo}, {hi}) at ({:.6}, {:.6}) has no label",
                    mid[0], mid[1]
                ))
            })?;
            boundary.push(BoundaryEdge { a: lo, b: hi, kind, patch });
        }
        Self::assemble(vertices, triangles, regions, None, vec![], boundary, true)
    }

    fn assemble(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<usize>,
        ref_edge: Option<Vec<usize>>,
        parent: Vec<Option<usize>>,
        boundary: Vec<BoundaryEdge>,
        check_junctions: bool,
    ) -> Result<Self> {
        if regions.len() != triangles.len() {
            return Err(HelmError::Specification(format!(
                "{} region tags for {} triangles",
                regions.len(),
                triangles.len()
            )));
        }
        if triangles.is_empty() {
            return Err(HelmError::Input("mesh has no triangles".into()));
        }
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= vertices.len()) {
                return Err(HelmError::Input(format!("triangle {k} references a missing vertex")));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(HelmError::Geometry(format!("triangle {k} repeats a vertex")));
            }
        }
        let (triangles, flipped) = orient(&vertices, triangles)?;
        let ref_edge = match ref_edge {
            Some(r) => {
                debug_assert!(!flipped, "refined triangles keep their orientation");
                r
            }
            None => triangles.iter().map(|t| longest_edge(&vertices, t)).collect(),
        };
        let parent = if parent.is_empty() { vec![None; triangles.len()] } else { parent };

        // edge -> [(triangle, local index, start vertex)]
        let mut adj: BTreeMap<(usize, usize), Vec<(usize, usize, usize)>> = BTreeMap::new();
        for (k, t) in triangles.iter().enumerate() {
            for j in 0..3 {
                let (a, b) = local_edge(t, j);
                adj.entry(edge_key(a, b)).or_default().push((k, j, a));
            }
        }
        for (&(a, b), users) in &adj {
            if users.len() > 2 {
                return Err(HelmError::Structural(format!(
                    "edge ({a}, {b}) is shared by {} triangles",
                    users.len()
                )));
            }
            if users.len() == 2 && users[0].2 == users[1].2 {
                return Err(HelmError::Structural(format!(
                    "triangles {} and {} overlap across edge ({a}, {b})",
                    users[0].0, users[1].0
                )));
            }
        }
        if check_junctions {
            check_t_junctions(&vertices, &triangles, &adj)?;
        }

        let mut labels: BTreeMap<(usize, usize), (BoundaryKind, usize)> = BTreeMap::new();
        for e in &boundary {
            let key = edge_key(e.a, e.b);
            match adj.get(&key) {
                Some(u) if u.len() == 1 => {}
                Some(_) => {
                    return Err(HelmError::Specification(format!(
                        "label on interior edge ({}, {})",
                        key.0, key.1
                    )))
                }
                None => {
                    return Err(HelmError::Specification(format!(
                        "label on edge ({}, {}) that is not in the mesh",
                        key.0, key.1
                    )))
                }
            }
            if labels.insert(key, (e.kind, e.patch)).is_some() {
                return Err(HelmError::Specification(format!(
                    "edge ({}, {}) labelled twice",
                    key.0, key.1
                )));
            }
        }

        let mut faces = Vec::with_capacity(adj.len());
        let mut tri_faces = vec![[usize::MAX; 3]; triangles.len()];
        for (&(lo, hi), users) in &adj {
            let mut users = users.clone();
            users.sort_by_key(|u| u.0);
            let (k0, j0, from) = users[0];
            let to = if from == lo { hi } else { lo };
            let (pa, pb) = (vertices[from], vertices[to]);
            let length = dist(pa, pb);
            let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
            let (kind, patch, owners, local) = if users.len() == 2 {
                let (k1, j1, _) = users[1];
                (FaceKind::Interior, None, [Some(k0), Some(k1)], [j0, j1])
            } else {
                let (kind, patch) = labels.get(&(lo, hi)).copied().ok_or_else(|| {
                    HelmError::Specification(format!("boundary edge ({lo}, {hi}) has no label"))
                })?;
                let patch = (kind == BoundaryKind::Robin).then_some(patch);
                (FaceKind::Boundary(kind), patch, [Some(k0), None], [j0, usize::MAX])
            };
            let f = faces.len();
            for (slot, owner) in owners.iter().enumerate() {
                if let Some(k) = owner {
                    tri_faces[*k][local[slot]] = f;
                }
            }
            faces.push(Face {
                vertices: [lo, hi],
                owners,
                local,
                kind,
                patch,
                normal,
                length,
            });
        }
        let mut boundary: Vec<BoundaryEdge> = labels
            .into_iter()
            .map(|((a, b), (kind, patch))| BoundaryEdge { a, b, kind, patch })
            .collect();
        boundary.sort_by_key(|e| (e.a, e.b));
        Ok(Self {
            vertices,
            triangles,
            regions,
            ref_edge,
            parent,
            faces,
            tri_faces,
            boundary,
        })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn region(&self, k: usize) -> usize {
        self.regions[k]
    }

    pub fn regions(&self) -> &[usize] {
        &self.regions
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    /// Faces of triangle `k`, indexed by local edge.
    pub fn triangle_faces(&self, k: usize) -> [usize; 3] {
        self.tri_faces[k]
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    /// Triangle of the previous mesh this one was bisected from.
    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k]
    }

    /// Local index of the refinement edge (opposite the newest vertex).
    pub fn refinement_edge(&self, k: usize) -> usize {
        self.ref_edge[k]
    }

    pub fn corners(&self, k: usize) -> [[f64; 2]; 3] {
        let t = self.triangles[k];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn element_map(&self, k: usize) -> ElementMap {
        ElementMap::new(self.corners(k)).expect("validated triangles are non-degenerate")
    }

    pub fn area(&self, k: usize) -> f64 {
        signed_area(self.corners(k))
    }

    pub fn centroid(&self, k: usize) -> [f64; 2] {
        let c = self.corners(k);
        [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0]
    }

    /// Diameter `h_K` (longest edge).
    pub fn h(&self, k: usize) -> f64 {
        let c = self.corners(k);
        dist(c[0], c[1]).max(dist(c[1], c[2])).max(dist(c[2], c[0]))
    }

    /// Inscribed-ball diameter `rho_K = 4 |K| / perimeter`.
    pub fn rho(&self, k: usize) -> f64 {
        let c = self.corners(k);
        let per = dist(c[0], c[1]) + dist(c[1], c[2]) + dist(c[2], c[0]);
        4.0 * self.area(k) / per
    }

    pub fn kappa(&self, k: usize) -> f64 {
        self.h(k) / self.rho(k)
    }

    pub fn h_max(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.h(k)).fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.h(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn kappa_max(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.kappa(k)).fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|k| self.area(k)).sum()
    }

    /// Point on face `f` at parameter `t` in `[0, 1]`.
    pub fn face_point(&self, f: usize, t: f64) -> [f64; 2] {
        let [a, b] = self.faces[f].vertices;
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]
    }

    pub fn face_midpoint(&self, f: usize) -> [f64; 2] {
        self.face_point(f, 0.5)
    }

    pub fn count_faces(&self, kind: FaceKind) -> usize {
        self.faces.iter().filter(|f| f.kind == kind).count()
    }

    /// Triangles sharing at least one vertex with `k` (including `k`), sorted.
    pub fn vertex_patch(&self, k: usize) -> Vec<usize> {
        let vt = self.vertex_triangles();
        let mut out: BTreeSet<usize> = BTreeSet::new();
        for &v in &self.triangles[k] {
            out.extend(vt[v].iter().copied());
        }
        out.into_iter().collect()
    }

    /// For every vertex, the triangles containing it (sorted).
    pub fn vertex_triangles(&self) -> Vec<Vec<usize>> {
        let mut vt = vec![Vec::new(); self.vertices.len()];
        for (k, t) in self.triangles.iter().enumerate() {
            for &v in t {
                vt[v].push(k);
            }
        }
        vt
    }

    pub fn n_regions(&self) -> usize {
        self.regions.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn robin_patches(&self) -> BTreeSet<usize> {
        self.faces.iter().filter_map(|f| f.patch).collect()
    }

    pub fn has_boundary(&self, kind: BoundaryKind) -> bool {
        self.faces.iter().any(|f| f.kind == FaceKind::Boundary(kind))
    }

    /// Newest-vertex bisection of the marked triangles (all three edges of a
    /// marked triangle are bisected), followed by the closure that keeps the
    /// mesh matching.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        if marked.is_empty() {
            return Err(HelmError::Input("no triangles marked for refinement".into()));
        }
        let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &k in marked {
            if k >= self.n_triangles() {
                return Err(HelmError::Input(format!("marked triangle {k} does not exist")));
            }
            let t = &self.triangles[k];
            for j in 0..3 {
                let (a, b) = local_edge(t, j);
                edges.insert(edge_key(a, b));
            }
        }
        // closure: a triangle with any bisected edge must bisect its refinement edge
        loop {
            let mut changed = false;
            for (k, t) in self.triangles.iter().enumerate() {
                let (a, b) = local_edge(t, self.ref_edge[k]);
                let rk = edge_key(a, b);
                if edges.contains(&rk) {
                    continue;
                }
                if (0..3).any(|j| {
                    let (a, b) = local_edge(t, j);
                    edges.contains(&edge_key(a, b))
                }) {
                    edges.insert(rk);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let mut vertices = self.vertices.clone();
        let mut mid: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b) in &edges {
            let (pa, pb) = (vertices[a], vertices[b]);
            mid.insert((a, b), vertices.len());
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
        }
        let mut triangles = Vec::new();
        let mut regions = Vec::new();
        let mut ref_edge = Vec::new();
        let mut parent = Vec::new();
        for (k, t) in self.triangles.iter().enumerate() {
            let mut out = Vec::new();
            bisect(*t, self.ref_edge[k], &mid, &mut out);
            for (child, r) in out {
                triangles.push(child);
                regions.push(self.regions[k]);
                ref_edge.push(r);
                parent.push(Some(k));
            }
        }
        let mut boundary = Vec::with_capacity(self.boundary.len());
        for e in &self.boundary {
            match mid.get(&edge_key(e.a, e.b)) {
                Some(&m) => {
                    boundary.push(BoundaryEdge { b: m, ..*e });
                    boundary.push(BoundaryEdge { a: m, ..*e });
                }
                None => boundary.push(*e),
            }
        }
        Self::assemble(
            vertices,
            triangles,
            regions,
            Some(ref_edge),
            parent,
            boundary,
            false,
        )
    }

    pub fn refine_uniform(&self) -> Result<Mesh> {
        let all: Vec<usize> = (0..self.n_triangles()).collect();
        self.refine(&all)
    }
}

fn bisect(
    t: [usize; 3],
    r: usize,
    mid: &BTreeMap<(usize, usize), usize>,
    out: &mut Vec<([usize; 3], usize)>,
) {
    let (a, b, c) = (t[(r + 1) % 3], t[(r + 2) % 3], t[r]);
    match mid.get(&edge_key(a, b)) {
        None => out.push((t, r)),
        Some(&m) => {
            bisect([c, a, m], 2, mid, out);
            bisect([b, c, m], 2, mid, out);
        }
    }
}

fn longest_edge(v: &[[f64; 2]], t: &[usize; 3]) -> usize {
    let mut best = 0;
    let mut len = -1.0;
    for j in 0..3 {
        let (a, b) = local_edge(t, j);
        let l = dist(v[a], v[b]);
        // strict comparison with a relative margin keeps ties on the lowest index
        if l > len * (1.0 + 1e-12) {
            best = j;
            len = l;
        }
    }
    best
}

fn orient(vertices: &[[f64; 2]], mut triangles: Vec<[usize; 3]>) -> Result<(Vec<[usize; 3]>, bool)> {
    let mut flipped = false;
    for (k, t) in triangles.iter_mut().enumerate() {
        if t.iter().any(|&v| v >= vertices.len()) {
            return Err(HelmError::Input(format!("triangle {k} references a missing vertex")));
        }
        let a = signed_area([vertices[t[0]], vertices[t[1]], vertices[t[2]]]);
        if !a.is_finite() || a.abs() < GEOM_TOL {
            return Err(HelmError::Geometry(format!("triangle {k} has zero area")));
        }
        if a < 0.0 {
            t.swap(1, 2);
            flipped = true;
        }
    }
    Ok((triangles, flipped))
}

fn check_t_junctions(
    vertices: &[[f64; 2]],
    triangles: &[[usize; 3]],
    adj: &BTreeMap<(usize, usize), Vec<(usize, usize, usize)>>,
) -> Result<()> {
    let mut used: BTreeSet<usize> = BTreeSet::new();
    for t in triangles {
        used.extend(t.iter().copied());
    }
    for (&(a, b), users) in adj {
        if users.len() != 1 {
            continue;
        }
        let (pa, pb) = (vertices[a], vertices[b]);
        let len = dist(pa, pb);
        let (xmin, xmax) = (pa[0].min(pb[0]) - GEOM_TOL, pa[0].max(pb[0]) + GEOM_TOL);
        let (ymin, ymax) = (pa[1].min(pb[1]) - GEOM_TOL, pa[1].max(pb[1]) + GEOM_TOL);
        for &v in &used {
            if v == a || v == b {
                continue;
            }
            let p = vertices[v];
            if p[0] < xmin || p[0] > xmax || p[1] < ymin || p[1] > ymax {
                continue;
            }
            let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
            if (cross / len).abs() > GEOM_TOL {
                continue;
            }
            let s = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / (len * len);
            if s > GEOM_TOL && s < 1.0 - GEOM_TOL {
                return Err(HelmError::Structural(format!(
                    "vertex {v} lies inside edge ({a}, {b}): non-matching mesh"
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles(kind: BoundaryKind) -> Mesh {
        unit_square(1, &uniform_label(kind)).unwrap()
    }

    #[test]
    fn two_triangle_square_has_five_faces() {
        let m = two_triangles(BoundaryKind::Dirichlet);
        assert_eq!(m.faces().len(), 5);
        assert_eq!(m.count_faces(FaceKind::Boundary(BoundaryKind::Dirichlet)), 4);
        assert_eq!(m.count_faces(FaceKind::Interior), 1);
    }

    #[test]
    fn structured_square_boundary_counts() {
        let rule = square_sides(
            [BoundaryKind::Robin, BoundaryKind::Neumann, BoundaryKind::Neumann, BoundaryKind::Neumann],
        );
        let m = unit_square(4, &rule).unwrap();
        assert_eq!(m.n_triangles(), 32);
        assert_eq!(m.count_faces(FaceKind::Boundary(BoundaryKind::Robin)), 4);
        assert_eq!(m.count_faces(FaceKind::Boundary(BoundaryKind::Neumann)), 12);
        let fine = m.refine_uniform().unwrap();
        assert_eq!(fine.count_faces(FaceKind::Boundary(BoundaryKind::Robin)), 8);
        assert_eq!(fine.count_faces(FaceKind::Boundary(BoundaryKind::Neumann)), 24);
    }

    #[test]
    fn partial_edge_sharing_is_structural() {
        // one triangle below the segment (0,0)-(2,0), two above it meeting at (1,0)
        let v = vec![[0.0, 0.0], [2.0, 0.0], [1.0, -1.0], [1.0, 0.0], [1.0, 1.0]];
        let t = vec![[0, 2, 1], [0, 3, 4], [3, 1, 4]];
        let r = Mesh::build_with_rule(v, t, vec![0; 3], &uniform_label(BoundaryKind::Dirichlet));
        assert!(matches!(r, Err(HelmError::Structural(_))), "{r:?}");
    }

    #[test]
    fn unlabelled_boundary_is_a_specification_error() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let b = vec![BoundaryEdge { a: 0, b: 1, kind: BoundaryKind::Neumann, patch: 0 }];
        let r = Mesh::build(v, vec![[0, 1, 2]], vec![0], b);
        assert!(matches!(r, Err(HelmError::Specification(_))));
    }

    #[test]
    fn zero_area_is_a_geometry_error() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        let r = Mesh::build_with_rule(v, vec![[0, 1, 2]], vec![0], &uniform_label(BoundaryKind::Neumann));
        assert!(matches!(r, Err(HelmError::Geometry(_))));
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let m = Mesh::build_with_rule(v, vec![[0, 2, 1]], vec![0], &uniform_label(BoundaryKind::Neumann))
            .unwrap();
        assert!(m.area(0) > 0.0);
    }

    #[test]
    fn equilateral_scalars() {
        let v = vec![[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        let m = Mesh::build_with_rule(v, vec![[0, 1, 2]], vec![0], &uniform_label(BoundaryKind::Neumann))
            .unwrap();
        assert!((m.h(0) - 1.0).abs() < 1e-15);
        assert!((m.rho(0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((m.kappa(0) - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn marking_everything_on_two_triangles_gives_eight() {
        let m = two_triangles(BoundaryKind::Dirichlet);
        let r = m.refine(&[0, 1]).unwrap();
        assert_eq!(r.n_triangles(), 8);
        assert!((r.total_area() - 1.0).abs() < 1e-14);
        assert!((r.h_max() - 0.5 * m.h_max()).abs() < 1e-14);
        assert!(m.refine(&[]).is_err());
    }

    #[test]
    fn single_mark_closure_keeps_mesh_matching() {
        let m = unit_square(2, &uniform_label(BoundaryKind::Neumann)).unwrap();
        let r = m.refine(&[0]).unwrap();
        // reassembling with the junction check proves there are no hanging nodes
        let again = Mesh::build(
            r.vertices().to_vec(),
            r.triangles().to_vec(),
            r.regions().to_vec(),
            r.boundary_edges().to_vec(),
        );
        assert!(again.is_ok());
        assert!(r.n_triangles() > m.n_triangles() + 2);
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let m = l_shape(2, &uniform_label(BoundaryKind::Dirichlet)).unwrap();
        for (f, face) in m.faces().iter().enumerate() {
            let n = face.normal;
            assert!(((n[0] * n[0] + n[1] * n[1]).sqrt() - 1.0).abs() < 1e-14);
            let c = m.centroid(face.plus());
            let x = m.face_midpoint(f);
            assert!((x[0] - c[0]) * n[0] + (x[1] - c[1]) * n[1] > 0.0);
        }
        assert!((m.total_area() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_patch_of_corner_triangle() {
        let m = unit_square(2, &uniform_label(BoundaryKind::Neumann)).unwrap();
        // triangle 1 = (0,0),(0.5,0.5),(0,0.5) touches vertices 0, 4, 3
        let p = m.vertex_patch(1);
        for &k in &p {
            let shared = m.triangles()[k].iter().any(|v| m.triangles()[1].contains(v));
            assert!(shared);
        }
        let expected = (0..m.n_triangles())
            .filter(|&k| m.triangles()[k].iter().any(|v| m.triangles()[1].contains(v)))
            .count();
        assert_eq!(p.len(), expected);
    }
}
