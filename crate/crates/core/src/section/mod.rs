//! Circle-valued projection `pr` of a positive closed form, level-set leaves and their
//! verification as global surfaces of section.

mod verify;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::cohomology::ClosedForm;
use crate::error::{Error, Result};
use crate::geometry::{wrap, wrap_signed, DomainSpec, FlowScenario};

pub use verify::{
    boundary_winding, flow_deformation_residual, return_time_stats, verify_degree, verify_global_section,
    standard_loops, verify_transversality, BoundaryCircle, DegreeRow, HistogramBin, ReturnStats, SectionReport, SectionSettings,
    SectionVerdict, TransversalityReport,
};

/// Histogram bins that must all be hit by `pr` on the grid.
pub const SURJECTIVITY_BINS: usize = 64;
/// Candidate levels for the regular value.
pub const LEVEL_CANDIDATES: usize = 16;
const CLOSEDNESS_TOL: f64 = 1e-8;

/// `pr(q) = ∫_{q₀}^q η mod 1`, tabulated on a vertex grid of the domain.
///
/// Periodic axes carry `n` vertices offset by half a cell, the non-periodic axis `n + 1`
/// vertices including both faces.
#[derive(Debug, Clone)]
pub struct ProjectionField {
    pub eta: ClosedForm,
    pub base: [f64; 3],
    pub n: usize,
    dims: [usize; 3],
    lo: [f64; 3],
    h: [f64; 3],
    periodic: [bool; 3],
    /// Integer jump of the lift across one period of each periodic axis.
    jumps: [i64; 3],
    /// Lift at the vertices, row-major.
    pub lifts: Vec<f64>,
    /// `min η(X)` over the vertices.
    pub min_eta_x: f64,
}

impl ProjectionField {
    /// Real-valued lift `c·(q − q₀) + G(q) − G(q₀)` at an unwrapped point.
    pub fn lift(&self, q: &[f64; 3]) -> f64 {
        let lin: f64 = (0..3).map(|k| self.eta.coeffs[k] * (q[k] - self.base[k])).sum();
        lin + self.eta.potential_value(q) - self.eta.potential_value(&self.base)
    }

    pub fn pr(&self, q: &[f64; 3]) -> f64 {
        wrap(self.lift(q), 1.0)
    }

    fn index(&self, i: [usize; 3]) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    fn vertex(&self, i: [usize; 3]) -> [f64; 3] {
        let mut q = [0.0; 3];
        for k in 0..3 {
            let off = if self.periodic[k] { 0.5 } else { 0.0 };
            q[k] = self.lo[k] + (i[k] as f64 + off) * self.h[k];
        }
        q
    }

    pub fn vertex_count(&self) -> usize {
        self.lifts.len()
    }

    /// Smallest cell edge length.
    pub fn min_spacing(&self) -> f64 {
        self.h.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Circular distance from `x` to the nearest vertex value of `pr`.
    pub fn level_clearance(&self, x: f64) -> f64 {
        self.lifts.iter().map(|l| wrap_signed(l - x, 1.0).abs()).fold(f64::INFINITY, f64::min)
    }

    /// The candidate level `j / 16` farthest from every vertex value.
    pub fn regular_value(&self) -> f64 {
        let mut best = (0.0, f64::NEG_INFINITY);
        for j in 0..LEVEL_CANDIDATES {
            let x = j as f64 / LEVEL_CANDIDATES as f64;
            let d = self.level_clearance(x);
            if d > best.1 {
                best = (x, d);
            }
        }
        best.0
    }
}

/// Largest `|∮ η|` over small coordinate squares (zero for a closed form).
fn closedness_residual(eta: &ClosedForm, d: &DomainSpec) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let sub = 32;
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        for k in 0..4 {
            let mut q0 = [0.0; 3];
            for ax in 0..3 {
                q0[ax] = d.axes[ax].lo + d.axes[ax].width() * (0.2 + 0.15 * k as f64);
            }
            let (ha, hb) = (0.1 * d.axes[a].width(), 0.1 * d.axes[b].width());
            let corners = [(0.0, 0.0), (ha, 0.0), (ha, hb), (0.0, hb), (0.0, 0.0)];
            let mut pts = Vec::new();
            for w in corners.windows(2) {
                for s in 0..sub {
                    let f = s as f64 / sub as f64;
                    let mut q = q0;
                    q[a] += w[0].0 + f * (w[1].0 - w[0].0);
                    q[b] += w[0].1 + f * (w[1].1 - w[0].1);
                    pts.push(q);
                }
            }
            pts.push(q0);
            worst = worst.max(eta.pair_loop(&pts)?.abs());
        }
    }
    Ok(worst)
}

/// Tabulates `pr` on an `n`-vertex grid and checks closedness and surjectivity.
pub fn build_projection(s: &FlowScenario, eta: &ClosedForm, base: [f64; 3], n: usize) -> Result<ProjectionField> {
    if n < 2 {
        return Err(Error::Construction(format!("projection grid needs n ≥ 2, got {n}")));
    }
    let d = s.domain();
    let residual = closedness_residual(eta, d)?;
    if residual > CLOSEDNESS_TOL {
        return Err(Error::Construction(format!("η is not closed: loop integral {residual:.3e}")));
    }
    let mut dims = [n; 3];
    let mut lo = [0.0; 3];
    let mut h = [0.0; 3];
    let mut periodic = [true; 3];
    let mut jumps = [0i64; 3];
    for k in 0..3 {
        let a = &d.axes[k];
        lo[k] = a.lo;
        h[k] = a.width() / n as f64;
        periodic[k] = a.periodic;
        if a.periodic {
            let j = eta.coeffs[k] * a.width();
            if (j - j.round()).abs() > 1e-9 {
                return Err(Error::Construction(format!("period of η along {} is {j}, not an integer", a.name)));
            }
            jumps[k] = j.round() as i64;
        } else {
            dims[k] = n + 1;
        }
    }
    let mut p = ProjectionField {
        eta: eta.clone(),
        base,
        n,
        dims,
        lo,
        h,
        periodic,
        jumps,
        lifts: Vec::new(),
        min_eta_x: f64::INFINITY,
    };
    let total = dims[0] * dims[1] * dims[2];
    let idx3 = |k: usize| [k / (dims[1] * dims[2]), (k / dims[2]) % dims[1], k % dims[2]];
    let data: Vec<(f64, f64)> = (0..total)
        .into_par_iter()
        .map(|k| {
            let q = p.vertex(idx3(k));
            (p.lift(&q), eta.beta_of_x(s, &q))
        })
        .collect();
    p.lifts = data.iter().map(|x| x.0).collect();
    p.min_eta_x = data.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    // the piecewise-linear interpolant covers every value between the ends of an edge
    let mut bins = [false; SURJECTIVITY_BINS];
    for k in 0..total {
        let i = idx3(k);
        for ax in 0..3 {
            let mut j = i;
            let mut jump = 0i64;
            if i[ax] + 1 == dims[ax] {
                if !periodic[ax] {
                    continue;
                }
                j[ax] = 0;
                jump = jumps[ax];
            } else {
                j[ax] += 1;
            }
            let (a, b) = (p.lifts[k], p.lifts[p.index(j)] + jump as f64);
            mark_bins(&mut bins, a.min(b), a.max(b));
        }
    }
    let empty = bins.iter().filter(|b| !**b).count();
    if empty > 0 {
        return Err(Error::Construction(format!("pr misses {empty} of {SURJECTIVITY_BINS} histogram bins")));
    }
    Ok(p)
}

fn mark_bins(bins: &mut [bool; SURJECTIVITY_BINS], lo: f64, hi: f64) {
    let n = SURJECTIVITY_BINS as f64;
    if hi - lo >= 1.0 {
        bins.iter_mut().for_each(|b| *b = true);
        return;
    }
    let start = (lo * n).floor() as i64;
    let end = (hi * n).floor() as i64;
    for b in start..=end {
        bins[b.rem_euclid(SURJECTIVITY_BINS as i64) as usize] = true;
    }
}

/// A triangulated leaf `pr⁻¹(x)` in domain coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct SectionLeaf {
    pub level: f64,
    /// Vertex positions, periodic coordinates wrapped into the box.
    pub vertices: Vec<[f64; 3]>,
    /// Triangles oriented so that `η` is positive on their normal.
    pub faces: Vec<[usize; 3]>,
    /// Domain face index for vertices on a face of the box.
    pub vertex_face: Vec<Option<usize>>,
    /// Boundary loops as oriented vertex cycles, with the domain face they lie on.
    pub loops: Vec<(usize, Vec<usize>)>,
    /// Connected components of the triangle adjacency graph.
    pub components: usize,
    /// `V − E + F` of the mesh, plus one for every loop on a collapsed face.
    pub euler_characteristic: i64,
    /// Boundary loops that are not capped by a collapsed face.
    pub boundary_count: usize,
    pub genus: i64,
}

const TETS: [[usize; 4]; 6] = [[0, 1, 3, 7], [0, 1, 5, 7], [0, 2, 3, 7], [0, 2, 6, 7], [0, 4, 5, 7], [0, 4, 6, 7]];

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut a: usize) -> usize {
        while self.0[a] != a {
            self.0[a] = self.0[self.0[a]];
            a = self.0[a];
        }
        a
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a] = b;
        }
    }
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Extracts `pr⁻¹(x)` by marching tetrahedra on the Freudenthal subdivision of each cell.
pub fn extract_leaf(s: &FlowScenario, p: &ProjectionField, level: f64) -> Result<SectionLeaf> {
    let d = s.domain();
    let x = wrap(level, 1.0);
    let cells = [
        if p.periodic[0] { p.dims[0] } else { p.dims[0] - 1 },
        if p.periodic[1] { p.dims[1] } else { p.dims[1] - 1 },
        if p.periodic[2] { p.dims[2] } else { p.dims[2] - 1 },
    ];
    // vertices keyed by (edge endpoints, level relative to the lift at the first endpoint)
    let mut keys: BTreeMap<(usize, usize, i64), usize> = BTreeMap::new();
    let mut vertices: Vec<[f64; 3]> = Vec::new();
    let mut vertex_face: Vec<Option<usize>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for ci in 0..cells[0] {
        for cj in 0..cells[1] {
            for cl in 0..cells[2] {
                let base = [ci, cj, cl];
                let mut node = [0usize; 8];
                let mut pos = [[0.0; 3]; 8];
                let mut val = [0.0; 8];
                let mut shift = [0i64; 8];
                let mut cidx = [[0usize; 3]; 8];
                for c in 0..8 {
                    let mut idx = [0usize; 3];
                    let mut unwrapped = [0usize; 3];
                    let mut sh = 0i64;
                    for k in 0..3 {
                        let i = base[k] + ((c >> k) & 1);
                        unwrapped[k] = i;
                        if p.periodic[k] && i == p.dims[k] {
                            idx[k] = 0;
                            sh += p.jumps[k];
                        } else {
                            idx[k] = i;
                        }
                    }
                    node[c] = p.index(idx);
                    cidx[c] = unwrapped;
                    pos[c] = p.vertex(unwrapped);
                    shift[c] = sh;
                    val[c] = p.lifts[node[c]] + sh as f64;
                }
                let lo = val.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = val.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let m_lo = (lo - x).ceil() as i64;
                let m_hi = (hi - x).floor() as i64;
                for m in m_lo..=m_hi {
                    let lv = x + m as f64;
                    for tet in TETS {
                        let above: Vec<usize> = tet.iter().cloned().filter(|&c| val[c] >= lv).collect();
                        let below: Vec<usize> = tet.iter().cloned().filter(|&c| val[c] < lv).collect();
                        if above.is_empty() || below.is_empty() {
                            continue;
                        }
                        let mut edge_vertex = |a: usize, b: usize| -> usize {
                            let (a, b) = if node[a] <= node[b] { (a, b) } else { (b, a) };
                            let rel = (lv - shift[a] as f64 - x).round() as i64;
                            *keys.entry((node[a], node[b], rel)).or_insert_with(|| {
                                let t = (lv - val[a]) / (val[b] - val[a]);
                                let mut q = [0.0; 3];
                                for k in 0..3 {
                                    q[k] = pos[a][k] + t * (pos[b][k] - pos[a][k]);
                                }
                                let mut on_face = None;
                                for (fi, f) in d.faces.iter().enumerate() {
                                    let i = if f.upper { p.dims[f.axis] - 1 } else { 0 };
                                    if cidx[a][f.axis] == i && cidx[b][f.axis] == i {
                                        on_face = Some(fi);
                                        q[f.axis] = if f.upper { d.axes[f.axis].hi } else { d.axes[f.axis].lo };
                                    }
                                }
                                for k in 0..3 {
                                    if p.periodic[k] {
                                        q[k] = d.axes[k].lo + wrap(q[k] - d.axes[k].lo, d.axes[k].width());
                                    }
                                }
                                vertices.push(q);
                                vertex_face.push(on_face);
                                vertices.len() - 1
                            })
                        };
                        let centroid = |set: &[usize]| {
                            let mut c = [0.0; 3];
                            for &v in set {
                                for k in 0..3 {
                                    c[k] += pos[v][k] / set.len() as f64;
                                }
                            }
                            c
                        };
                        let up = sub(&centroid(&above), &centroid(&below));
                        let mut tris: Vec<[(usize, usize); 3]> = Vec::new();
                        match (above.len(), below.len()) {
                            (1, 3) => tris.push([(above[0], below[0]), (above[0], below[1]), (above[0], below[2])]),
                            (3, 1) => tris.push([(below[0], above[0]), (below[0], above[1]), (below[0], above[2])]),
                            _ => {
                                let (a0, a1, b0, b1) = (above[0], above[1], below[0], below[1]);
                                tris.push([(a0, b0), (a0, b1), (a1, b1)]);
                                tris.push([(a0, b0), (a1, b1), (a1, b0)]);
                            }
                        }
                        for t in tris {
                            // orientation from the unwrapped positions inside this cell
                            let pts: Vec<[f64; 3]> = t
                                .iter()
                                .map(|&(a, b)| {
                                    let tt = (lv - val[a]) / (val[b] - val[a]);
                                    let mut q = [0.0; 3];
                                    for k in 0..3 {
                                        q[k] = pos[a][k] + tt * (pos[b][k] - pos[a][k]);
                                    }
                                    q
                                })
                                .collect();
                            let ids = [edge_vertex(t[0].0, t[0].1), edge_vertex(t[1].0, t[1].1), edge_vertex(t[2].0, t[2].1)];
                            let normal = cross(&sub(&pts[1], &pts[0]), &sub(&pts[2], &pts[0]));
                            if dot(&normal, &up) >= 0.0 {
                                faces.push(ids);
                            } else {
                                faces.push([ids[0], ids[2], ids[1]]);
                            }
                        }
                    }
                }
            }
        }
    }
    if faces.is_empty() {
        return Err(Error::Extraction(format!("level {x} does not meet the grid")));
    }
    assemble_leaf(d, x, vertices, vertex_face, faces)
}

fn assemble_leaf(
    d: &DomainSpec,
    level: f64,
    vertices: Vec<[f64; 3]>,
    vertex_face: Vec<Option<usize>>,
    faces: Vec<[usize; 3]>,
) -> Result<SectionLeaf> {
    // undirected edge → (count, directed occurrence of the last use)
    let mut edges: BTreeMap<(usize, usize), (usize, (usize, usize), usize)> = BTreeMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            let entry = edges.entry(key).or_insert((0, (a, b), fi));
            entry.0 += 1;
            entry.1 = (a, b);
            entry.2 = fi;
        }
    }
    if let Some((k, _)) = edges.iter().find(|(_, v)| v.0 > 2) {
        return Err(Error::Extraction(format!("edge {k:?} is shared by more than two triangles")));
    }
    let mut uf = UnionFind((0..faces.len()).collect());
    let mut first_face: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in 0..3 {
            let (a, b) = (f[e], f[(e + 1) % 3]);
            let key = (a.min(b), a.max(b));
            match first_face.get(&key) {
                Some(&g) => uf.union(fi, g),
                None => {
                    first_face.insert(key, fi);
                }
            }
        }
    }
    let mut roots: Vec<usize> = (0..faces.len()).map(|f| uf.find(f)).collect();
    roots.sort_unstable();
    roots.dedup();

    let mut next: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, &(count, (a, b), _)) in &edges {
        if count == 1 {
            if vertex_face[a].is_none() || vertex_face[b].is_none() || vertex_face[a] != vertex_face[b] {
                return Err(Error::Extraction(format!(
                    "open boundary edge ({a}, {b}) away from the domain faces; the grid is too coarse"
                )));
            }
            if next.insert(a, b).is_some() {
                return Err(Error::Extraction(format!("vertex {a} starts two boundary edges")));
            }
        }
    }
    let mut loops = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for &start in next.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut cycle = vec![start];
        seen.insert(start);
        let mut cur = next[&start];
        while cur != start {
            if !seen.insert(cur) {
                return Err(Error::Extraction("boundary edges do not form simple cycles".into()));
            }
            cycle.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::Extraction(format!("boundary polyline ends at vertex {cur}")))?;
        }
        loops.push((vertex_face[start].expect("boundary vertices lie on faces"), cycle));
    }
    let collapsed = loops
        .iter()
        .filter(|(f, _)| matches!(d.faces[*f].kind, crate::geometry::FaceKind::Collapsed { .. }))
        .count();
    let v = vertices.len() as i64;
    let e = edges.len() as i64;
    let f = faces.len() as i64;
    let chi = v - e + f + collapsed as i64;
    let boundary_count = loops.len() - collapsed;
    let genus = (2 - chi - boundary_count as i64) / 2;
    Ok(SectionLeaf {
        level,
        vertices,
        faces,
        vertex_face,
        loops,
        components: roots.len(),
        euler_characteristic: chi,
        boundary_count,
        genus,
    })
}

impl SectionLeaf {
    /// Writes the mesh as an indexed triangle list (`v x y z` and 1-based `f a b c` lines).
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "# leaf pr = {:.6}: {} vertices, {} faces", self.level, self.vertices.len(), self.faces.len())?;
        for v in &self.vertices {
            writeln!(out, "v {:.12} {:.12} {:.12}", v[0], v[1], v[2])?;
        }
        for f in &self.faces {
            writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loops lying on link faces, as `(component, face, vertex cycle)`.
    pub fn link_loops<'a>(&'a self, d: &'a DomainSpec) -> impl Iterator<Item = (usize, usize, &'a [usize])> + 'a {
        self.loops.iter().filter_map(move |(f, cyc)| match d.faces[*f].kind {
            crate::geometry::FaceKind::Link { component, .. } => Some((component, *f, cyc.as_slice())),
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RadialProfile;
    use std::f64::consts::TAU;

    #[test]
    fn t3_leaf_is_a_closed_torus() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let eta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]);
        let p = build_projection(&s, &eta, [0.0; 3], 8).unwrap();
        assert!((p.pr(&[0.3, 0.9, 0.1]) - 0.3).abs() < 1e-15);
        let leaf = extract_leaf(&s, &p, 0.5).unwrap();
        assert!(leaf.loops.is_empty());
        assert_eq!(leaf.components, 1);
        assert_eq!(leaf.genus, 1);
        assert!(leaf.vertices.iter().all(|v| (v[0] - 0.5).abs() < 1e-12));
    }

    #[test]
    fn solid_torus_leaf_is_an_annulus_from_the_core() {
        let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
        let eta = ClosedForm::constant(s.domain(), [0.0, 0.0, 1.0 / TAU]);
        let p = build_projection(&s, &eta, [0.0; 3], 8).unwrap();
        assert!((p.pr(&[1.0, 0.5, 2.0]) - 2.0 / TAU).abs() < 1e-15);
        assert_eq!(p.regular_value(), 0.0);
        let leaf = extract_leaf(&s, &p, 0.0).unwrap();
        assert_eq!(leaf.loops.len(), 2);
        assert_eq!(leaf.genus, 0);
        assert_eq!(leaf.components, 1);
    }

    #[test]
    fn non_closed_form_is_rejected() {
        #[derive(Debug)]
        struct Bad;
        impl crate::cohomology::Potential for Bad {
            fn value(&self, _: &[f64; 3]) -> f64 {
                0.0
            }
            fn gradient(&self, q: &[f64; 3]) -> [f64; 3] {
                [q[1], 0.0, 0.0]
            }
        }
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let eta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]).with_potential(std::sync::Arc::new(Bad));
        assert!(matches!(build_projection(&s, &eta, [0.0; 3], 8), Err(Error::Construction(_))));
    }

    #[test]
    fn obj_export() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let eta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]);
        let p = build_projection(&s, &eta, [0.0; 3], 4).unwrap();
        let leaf = extract_leaf(&s, &p, 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("leaf.obj");
        leaf.write_obj(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), leaf.vertices.len());
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), leaf.faces.len());
    }
}
