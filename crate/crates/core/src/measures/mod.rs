//! Intersection numbers of invariant measures: Birkhoff averages, and an occupation-measure
//! LP whose dual certifies positivity of the class on all invariant measures.

mod basis;
mod birkhoff;
mod condition;
pub mod lp;

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::blowup_field;
use crate::cohomology::ClosedForm;
use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, FaceKind, FlowScenario};
use lp::{solve_standard, LpStatus};

pub use basis::{TestBasis, TestPotential};
pub use birkhoff::{birkhoff_average, boundary_measure_pairing, BirkhoffAverage, BirkhoffWindow, TorusMeasure};
pub use condition::{
    analyze_component, check_condition_iii, ComponentReport, ConditionReport, ConditionSettings, ConditionVerdict,
};

/// Default slack on the invariance rows.
pub const DELTA_SLACK: f64 = 1e-8;
/// Tolerance for the refutation invariants `δ_inv ≤ tol` and `μ·y ≤ tol`.
pub const REFUTE_TOL: f64 = 1e-6;
/// Refinement factor (per axis) of the independent re-verification grid.
pub const REFINE: usize = 10;
const MAX_PIVOTS: usize = 200_000;

/// A sample point of `D_L`: interior cell centres carry the cell volume fraction, face
/// nodes (boundary tori and outer faces) carry zero volume.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridNode {
    pub q: [f64; 3],
    pub weight: f64,
    /// `Some(component)` for nodes on a link face.
    pub link: Option<usize>,
    /// Face index into the domain's face list, for face nodes.
    pub face: Option<usize>,
    /// The field in domain coordinates (`W` on link faces).
    pub field: [f64; 3],
}

/// The field at a domain point, using the blown-up `W` on link faces.
pub fn node_field(s: &FlowScenario, q: &[f64; 3], face: Option<usize>) -> [f64; 3] {
    let d = s.domain();
    if let Some(FaceKind::Link { component, collar }) = face.map(|f| d.faces[f].kind) {
        let w = blowup_field(s, component, collar.apply(q));
        let m = nalgebra::Matrix3::from_fn(|i, j| collar.matrix[i][j]);
        let v = m.try_inverse().expect("collar maps are invertible") * nalgebra::Vector3::from(w);
        return [v[0], v[1], v[2]];
    }
    s.domain_field(q)
}

/// Cell centres of an `n³` box partition plus an `n²` node grid on every non-collapsed face.
fn grid_points(d: &DomainSpec, n: usize) -> Vec<([f64; 3], f64, Option<usize>)> {
    let coord = |k: usize, i: usize| d.axes[k].lo + d.axes[k].width() * (i as f64 + 0.5) / n as f64;
    let cell = 1.0 / (n * n * n) as f64;
    let mut pts = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for l in 0..n {
                pts.push(([coord(0, i), coord(1, j), coord(2, l)], cell, None));
            }
        }
    }
    for (fi, f) in d.faces.iter().enumerate() {
        if matches!(f.kind, FaceKind::Collapsed { .. }) {
            continue;
        }
        let a = &d.axes[f.axis];
        let level = if f.upper { a.hi } else { a.lo };
        let others: Vec<usize> = (0..3).filter(|&k| k != f.axis).collect();
        for i in 0..n {
            for j in 0..n {
                let mut q = [0.0; 3];
                q[f.axis] = level;
                q[others[0]] = coord(others[0], i);
                q[others[1]] = coord(others[1], j);
                pts.push((q, 0.0, Some(fi)));
            }
        }
    }
    pts
}

#[derive(Debug, Clone)]
pub struct OccupationGrid {
    pub n: usize,
    pub nodes: Vec<GridNode>,
    pub basis: TestBasis,
    /// Largest `|W^r|` over the link-face nodes (tangency of `W` to the boundary tori).
    pub face_radial_max: f64,
}

impl OccupationGrid {
    /// `n³` cells, boundary collar nodes and `(2F + 1)³` test functions.
    pub fn new(s: &FlowScenario, n: usize, frequency: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Assembly("empty grid".into()));
        }
        let d = s.domain();
        let nodes: Vec<GridNode> = grid_points(d, n)
            .into_par_iter()
            .map(|(q, weight, face)| {
                let link = face.and_then(|f| match d.faces[f].kind {
                    FaceKind::Link { component, .. } => Some(component),
                    _ => None,
                });
                GridNode { q, weight, link, face, field: node_field(s, &q, face) }
            })
            .collect();
        let face_radial_max = nodes
            .iter()
            .filter(|nd| nd.link.is_some())
            .map(|nd| nd.field[d.faces[nd.face.expect("link nodes lie on faces")].axis].abs())
            .fold(0.0, f64::max);
        Ok(Self { n, nodes, basis: TestBasis::new(d, frequency), face_radial_max })
    }

    pub fn interior_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.face.is_none()).count()
    }
}

/// The occupation LP: minimize `Σ μ_c β(X)_c` over `μ ≥ 0`, `Σ μ = 1`,
/// `|Σ μ_c dg_k(X)_c| ≤ δ`. Row 0 normalizes, row 1 defines the pairing, then two rows per
/// test function.
#[derive(Debug, Clone)]
pub struct OccupationLp {
    pub grid: OccupationGrid,
    pub beta: ClosedForm,
    /// `β(X)` at every node.
    pub beta_x: Vec<f64>,
    /// `dg_k(X)` at every node, `K × N`.
    pub tests_x: DMatrix<f64>,
    pub delta_slack: f64,
}

impl OccupationLp {
    pub fn variable_count(&self) -> usize {
        self.beta_x.len()
    }

    pub fn constraint_count(&self) -> usize {
        2 + 2 * self.tests_x.nrows()
    }

    /// `Σ μ_c β(X)_c`.
    pub fn pairing(&self, weights: &[f64]) -> f64 {
        weights.iter().zip(&self.beta_x).map(|(m, b)| m * b).sum()
    }

    /// Pairing of the normalized volume measure on the interior cells.
    pub fn uniform_pairing(&self) -> f64 {
        let w: Vec<f64> = self.grid.nodes.iter().map(|n| n.weight).collect();
        self.pairing(&w)
    }

    /// Writes the LP in CPLEX LP format.
    pub fn write_lp(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let n = self.variable_count();
        let row = |out: &mut dyn Write, coeffs: &mut dyn Iterator<Item = f64>| -> std::io::Result<()> {
            let mut first = true;
            for (c, v) in coeffs.enumerate() {
                if v == 0.0 {
                    continue;
                }
                let sign = if v < 0.0 { "-" } else if first { "" } else { "+" };
                write!(out, " {sign} {:.17e} mu{c}", v.abs())?;
                first = false;
            }
            if first {
                write!(out, " 0 mu0")?;
            }
            Ok(())
        };
        writeln!(out, "\\ occupation-measure LP: {} cells, {} test functions", n, self.tests_x.nrows())?;
        writeln!(out, "Minimize\n obj: v\nSubject To")?;
        write!(out, " norm:")?;
        row(&mut out, &mut std::iter::repeat(1.0).take(n))?;
        writeln!(out, " = 1")?;
        write!(out, " pair:")?;
        row(&mut out, &mut self.beta_x.iter().cloned())?;
        writeln!(out, " - v = 0")?;
        for k in 0..self.tests_x.nrows() {
            for (tag, cmp, rhs) in [("hi", "<=", self.delta_slack), ("lo", ">=", -self.delta_slack)] {
                write!(out, " inv{k}_{tag}:")?;
                row(&mut out, &mut self.tests_x.row(k).iter().cloned())?;
                writeln!(out, " {cmp} {rhs:.17e}")?;
            }
        }
        writeln!(out, "Bounds\n v free\nEnd")?;
        out.flush()?;
        Ok(())
    }
}

/// Evaluates `β(X)` and `dg_k(X)` at the grid nodes.
pub fn assemble_lp(grid: &OccupationGrid, beta: &ClosedForm, delta_slack: f64) -> Result<OccupationLp> {
    if grid.nodes.is_empty() {
        return Err(Error::Assembly("empty grid".into()));
    }
    if !(delta_slack > 0.0) {
        return Err(Error::Assembly(format!("invariance slack must be positive, got {delta_slack}")));
    }
    let cols: Vec<(f64, Vec<f64>)> = grid
        .nodes
        .par_iter()
        .map(|nd| {
            let b = beta.apply(&nd.q, &nd.field);
            let t = grid.basis.eval_all(&nd.q).into_iter().map(|(_, g)| dot(&g, &nd.field)).collect();
            (b, t)
        })
        .collect();
    let k = grid.basis.len();
    let tests_x = DMatrix::from_fn(k, cols.len(), |i, j| cols[j].1[i]);
    let beta_x = cols.iter().map(|c| c.0).collect();
    Ok(OccupationLp { grid: grid.clone(), beta: beta.clone(), beta_x, tests_x, delta_slack })
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

/// Outcome of the LP together with the independently re-checked certificate.
#[derive(Debug, Clone, Serialize)]
pub struct Certificate {
    pub verdict: Verdict,
    pub lp_status: LpStatus,
    pub pivots: usize,
    pub variables: usize,
    pub constraints: usize,
    /// `min Σ μ β(X)` (1/seconds).
    pub primal_objective: f64,
    /// Dual objective `ε − δ Σ|λ|`.
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// Coefficients of the dual potential `g = Σ a_k g_k`.
    pub potential: Vec<f64>,
    /// `min_c η(X)_c` over the LP nodes for `η = β + dg` (1/seconds).
    pub epsilon_star: f64,
    /// Lipschitz bound on the variation of `η(X)` between nodes.
    pub discretization_bound: f64,
    /// `min η(X)` on the refined grid, when evaluated.
    pub refined_min: Option<f64>,
    pub refined_nodes: usize,
    /// `(node, weight)` for the nonzero weights of the primal measure.
    pub measure: Vec<(usize, f64)>,
    /// Recomputed `Σ μ_c β(X)_c`.
    pub pairing: f64,
    /// Recomputed `max_k |Σ μ_c dg_k(X)_c|`.
    pub invariance_residual: f64,
    pub verified: bool,
    pub notes: Vec<String>,
}

impl Certificate {
    pub fn potential(&self, lp: &OccupationLp) -> TestPotential {
        TestPotential { basis: lp.grid.basis.clone(), coeffs: self.potential.clone() }
    }
}

/// `max Σ_k L_k h_k / 2` with `L_k` the largest difference quotient of `η(X)` along axis `k`.
fn discretization_bound(d: &DomainSpec, grid: &OccupationGrid, eta: &[f64]) -> f64 {
    let n = grid.n;
    let idx = |i: usize, j: usize, l: usize| (i * n + j) * n + l;
    let mut bound = 0.0;
    for axis in 0..3 {
        let h = d.axes[axis].width() / n as f64;
        let periodic = d.axes[axis].periodic;
        let mut lip: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let mut c = [i, j, l];
                    if c[axis] + 1 == n {
                        if !periodic || n == 1 {
                            continue;
                        }
                        c[axis] = 0;
                    } else {
                        c[axis] += 1;
                    }
                    let diff = (eta[idx(c[0], c[1], c[2])] - eta[idx(i, j, l)]).abs();
                    lip = lip.max(diff / h);
                }
            }
        }
        if !periodic {
            // face nodes sit half a cell from the adjacent layer
            for (k, nd) in grid.nodes.iter().enumerate().skip(n * n * n) {
                let f = &d.faces[nd.face.expect("face node")];
                if f.axis != axis {
                    continue;
                }
                let mut best = f64::INFINITY;
                let mut nearest = 0;
                for (c, other) in grid.nodes[..n * n * n].iter().enumerate() {
                    let dist: f64 = (0..3).map(|a| (other.q[a] - nd.q[a]).abs()).sum();
                    if dist < best {
                        best = dist;
                        nearest = c;
                    }
                }
                lip = lip.max((eta[k] - eta[nearest]).abs() / (0.5 * h));
            }
        }
        bound += 0.5 * lip * h;
    }
    bound
}

/// Solves the occupation LP and turns the solution into a checked certificate.
pub fn certify_positivity(s: &FlowScenario, lp: &OccupationLp) -> Certificate {
    let n = lp.variable_count();
    let k = lp.tests_x.nrows();
    let m = 1 + 2 * k;
    // standard form over (μ, s⁺, s⁻)
    let mut a = DMatrix::zeros(m, n + 2 * k);
    let mut b = vec![lp.delta_slack; m];
    b[0] = 1.0;
    for c in 0..n {
        a[(0, c)] = 1.0;
        for r in 0..k {
            a[(1 + r, c)] = lp.tests_x[(r, c)];
            a[(1 + k + r, c)] = -lp.tests_x[(r, c)];
        }
    }
    for r in 0..2 * k {
        a[(1 + r, n + r)] = 1.0;
    }
    let mut cost = lp.beta_x.clone();
    cost.extend(std::iter::repeat(0.0).take(2 * k));
    let sol = solve_standard(&a, &b, &cost, MAX_PIVOTS);

    let mut cert = Certificate {
        verdict: Verdict::Inconclusive,
        lp_status: sol.status,
        pivots: sol.iterations,
        variables: n,
        constraints: lp.constraint_count(),
        primal_objective: sol.primal_objective,
        dual_objective: sol.dual_objective,
        duality_gap: sol.relative_gap(),
        potential: vec![0.0; k],
        epsilon_star: f64::NAN,
        discretization_bound: f64::NAN,
        refined_min: None,
        refined_nodes: 0,
        measure: Vec::new(),
        pairing: f64::NAN,
        invariance_residual: f64::NAN,
        verified: false,
        notes: Vec::new(),
    };
    if sol.status != LpStatus::Optimal {
        cert.notes.push(format!("LP solver stopped with status {:?} after {} pivots", sol.status, sol.iterations));
        return cert;
    }
    if sol.duality_gap_exceeds(1e-8) {
        cert.notes.push(format!("relative duality gap {:.3e} exceeds 1e-8", cert.duality_gap));
    }
    // g = −Σ (y⁺_k − y⁻_k) g_k makes β(X) + dg(X) ≥ y₀ at every node
    cert.potential = (0..k).map(|r| -(sol.y[1 + r] - sol.y[1 + k + r])).collect();
    for a in &mut cert.potential {
        if a.abs() < 1e-14 {
            *a = 0.0;
        }
    }
    let g = cert.potential(lp);

    // independent re-evaluation of η(X) at the LP nodes
    let eta: Vec<f64> =
        lp.grid.nodes.par_iter().map(|nd| eta_x(&lp.beta, &g, &nd.q, &nd.field)).collect();
    cert.epsilon_star = eta.iter().cloned().fold(f64::INFINITY, f64::min);
    cert.discretization_bound = discretization_bound(s.domain(), &lp.grid, &eta);

    // primal measure, with residuals recomputed from fresh evaluations
    let mu: Vec<f64> = sol.x[..n].to_vec();
    cert.measure = mu.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(i, w)| (i, *w)).collect();
    let total: f64 = mu.iter().sum();
    let fresh: Vec<(f64, Vec<f64>)> = lp
        .grid
        .nodes
        .par_iter()
        .map(|nd| {
            let f = node_field(s, &nd.q, nd.face);
            let b = lp.beta.apply(&nd.q, &f);
            (b, lp.grid.basis.eval_all(&nd.q).into_iter().map(|(_, gr)| dot(&gr, &f)).collect())
        })
        .collect();
    cert.pairing = mu.iter().zip(&fresh).map(|(w, f)| w * f.0).sum();
    cert.invariance_residual = (0..k)
        .map(|r| mu.iter().zip(&fresh).map(|(w, f)| w * f.1[r]).sum::<f64>().abs())
        .fold(0.0, f64::max)
        .max((total - 1.0).abs());

    if cert.epsilon_star > 0.0 && cert.epsilon_star > 2.0 * cert.discretization_bound {
        let (refined_min, count) = refined_minimum(s, &lp.beta, &g, lp.grid.n * REFINE);
        cert.refined_min = Some(refined_min);
        cert.refined_nodes = count;
        if refined_min >= 0.5 * cert.epsilon_star {
            cert.verdict = Verdict::Certified;
            cert.verified = true;
        } else {
            cert.notes.push(format!(
                "refined minimum {refined_min:.3e} is below ε*/2 = {:.3e}",
                0.5 * cert.epsilon_star
            ));
        }
    } else if cert.pairing <= REFUTE_TOL && cert.invariance_residual <= REFUTE_TOL {
        cert.verdict = Verdict::Refuted;
        cert.verified = true;
    } else {
        cert.notes.push(format!(
            "neither certificate holds: ε* = {:.3e} (discretization bound {:.3e}), μ·y = {:.3e}, δ_inv = {:.3e}",
            cert.epsilon_star, cert.discretization_bound, cert.pairing, cert.invariance_residual
        ));
    }
    cert
}

impl lp::LpSolution {
    fn duality_gap_exceeds(&self, tol: f64) -> bool {
        self.relative_gap() > tol
    }
}

fn eta_x(beta: &ClosedForm, g: &TestPotential, q: &[f64; 3], field: &[f64; 3]) -> f64 {
    beta.apply(q, field) + dot(&g.value_and_gradient(q).1, field)
}

/// `min η(X)` over the cell centres and face nodes of an `n³` grid.
pub fn refined_minimum(s: &FlowScenario, beta: &ClosedForm, g: &TestPotential, n: usize) -> (f64, usize) {
    let pts = grid_points(s.domain(), n);
    let min = pts
        .par_iter()
        .map(|(q, _, face)| eta_x(beta, g, q, &node_field(s, q, *face)))
        .reduce(|| f64::INFINITY, f64::min);
    (min, pts.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohomology::{nice_representative, DualClass};

    #[test]
    fn t3_lp_counts() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let grid = OccupationGrid::new(&s, 8, 1).unwrap();
        let y = DualClass::from_pairings(&s, &[1, 0, 0]).unwrap();
        let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
        assert_eq!(lp.variable_count(), 512);
        assert_eq!(lp.constraint_count(), 1 + 27 * 2 + 1);
    }

    #[test]
    fn empty_grid_is_an_assembly_error() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        assert!(matches!(OccupationGrid::new(&s, 0, 1), Err(Error::Assembly(_))));
    }

    #[test]
    fn single_cell_grid_gives_a_dirac_measure() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let grid = OccupationGrid::new(&s, 1, 0).unwrap();
        let y = DualClass::from_pairings(&s, &[0, 1, 0]).unwrap();
        let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
        let cert = certify_positivity(&s, &lp);
        assert_eq!(cert.measure, vec![(0, 1.0)]);
        assert!((cert.primal_objective - 1.618).abs() < 1e-15);
    }

    #[test]
    fn solid_torus_boundary_nodes_use_the_blown_up_field() {
        let s = FlowScenario::solid_torus(crate::geometry::RadialProfile::constant(1.0), std::f64::consts::TAU);
        let grid = OccupationGrid::new(&s, 4, 1).unwrap();
        let links = grid.nodes.iter().filter(|n| n.link == Some(0)).count();
        assert_eq!(links, 16);
        assert!(grid.face_radial_max <= 1e-8);
        for nd in grid.nodes.iter().filter(|n| n.link.is_some()) {
            assert_eq!(nd.q[1], 0.0);
            assert!((nd.field[2] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn lp_export_is_well_formed() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let grid = OccupationGrid::new(&s, 2, 1).unwrap();
        let y = DualClass::from_pairings(&s, &[1, 0, 0]).unwrap();
        let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("occ.lp");
        lp.write_lp(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.contains("Minimize") && text.contains("Subject To") && text.trim_end().ends_with("End"));
        assert_eq!(text.lines().filter(|l| l.starts_with(" inv")).count(), 54);
    }
}
