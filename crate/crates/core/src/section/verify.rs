use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{cross, dot, sub, ProjectionField, SectionLeaf};
use crate::cohomology::{basis_loops, meridian_loop, DualClass};
use crate::error::{Error, Result};
use crate::geometry::{rk4_solve, wrap_signed, AdaptiveOptions, ChartPoint, FaceKind, FlowScenario, State, Stepper};

/// Settings for section construction and verification.
#[derive(Debug, Clone, Serialize)]
pub struct SectionSettings {
    /// Vertices per axis of the projection grid.
    pub grid: usize,
    /// Level of the leaf; `None` selects a regular value.
    pub level: Option<f64>,
    pub return_samples: usize,
    /// Return-time cutoff (seconds); `None` means `10 / ε*`.
    pub cutoff: Option<f64>,
    pub seed: u64,
    pub tol: f64,
}

impl Default for SectionSettings {
    fn default() -> Self {
        Self { grid: 32, level: None, return_samples: 1000, cutoff: None, seed: 0, tol: 1e-10 }
    }
}

/// `q` shifted by whole periods to lie within half a period of `near`.
fn unwrap_near(s: &FlowScenario, near: &[f64; 3], q: &[f64; 3]) -> [f64; 3] {
    let d = s.domain();
    let mut out = *q;
    for k in 0..3 {
        if d.axes[k].periodic {
            out[k] = near[k] + wrap_signed(q[k] - near[k], d.axes[k].width());
        }
    }
    out
}

fn triangle(s: &FlowScenario, leaf: &SectionLeaf, f: &[usize; 3]) -> [[f64; 3]; 3] {
    let a = leaf.vertices[f[0]];
    [a, unwrap_near(s, &a, &leaf.vertices[f[1]]), unwrap_near(s, &a, &leaf.vertices[f[2]])]
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    /// `min η(X)` over face centroids (1/seconds).
    pub min_eta_x: f64,
    /// Required margin `ε*/2`.
    pub threshold: f64,
    /// Faces with `η(X) < ε*/2` (first few).
    pub offending_faces: Vec<usize>,
    /// Faces whose normal disagrees with the direction in which `X` crosses.
    pub negative_crossings: usize,
    /// Smallest sine of the angle between `X` and a face, in the manifold, over faces away
    /// from the link.
    pub interior_angle: f64,
    /// The same over faces touching a link face (tends to 0 where the section is tangent to
    /// its boundary orbits).
    pub boundary_angle: f64,
    pub passed: bool,
}

fn transversality_report(s: &FlowScenario, p: &ProjectionField, leaf: &SectionLeaf, eps_star: f64) -> TransversalityReport {
    let d = s.domain();
    let canon = s.canonical_chart();
    let chart = s.chart(canon).clone();
    let results: Vec<(f64, bool, f64, bool)> = leaf
        .faces
        .par_iter()
        .map(|f| {
            let tri = triangle(s, leaf, f);
            let mut c = [0.0; 3];
            for v in &tri {
                for k in 0..3 {
                    c[k] += v[k] / 3.0;
                }
            }
            let field = s.domain_field(&c);
            let eta = p.eta.apply(&c, &field);
            let normal = cross(&sub(&tri[1], &tri[0]), &sub(&tri[2], &tri[0]));
            let area = dot(&normal, &normal).sqrt();
            let negative = area > 1e-14 && dot(&normal, &field) < 0.0;
            // angle in the manifold between X and the image of the face
            let pts: Vec<State> = tri.iter().map(|q| s.to_canonical(&s.domain_to_manifold(q))).collect();
            let e1 = chart.delta(&pts[0], &pts[1]);
            let e2 = chart.delta(&pts[0], &pts[2]);
            let centre = s.to_canonical(&s.domain_to_manifold(&c));
            let x = s.field(canon, &centre);
            let angle = plane_angle(&x, &e1, &e2);
            let touches_link = f.iter().any(|&v| {
                leaf.vertex_face[v].map_or(false, |fi| matches!(d.faces[fi].kind, FaceKind::Link { .. }))
            });
            (eta, negative, angle, touches_link)
        })
        .collect();
    let threshold = 0.5 * eps_star;
    let min_eta_x = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let offending_faces: Vec<usize> =
        results.iter().enumerate().filter(|(_, r)| r.0 < threshold).map(|(i, _)| i).take(16).collect();
    let negative_crossings = results.iter().filter(|r| r.1).count();
    let angle = |link: bool| {
        results.iter().filter(|r| r.3 == link && r.2.is_finite()).map(|r| r.2).fold(f64::INFINITY, f64::min)
    };
    TransversalityReport {
        min_eta_x,
        threshold,
        passed: offending_faces.is_empty() && negative_crossings == 0,
        offending_faces,
        negative_crossings,
        interior_angle: angle(false),
        boundary_angle: angle(true),
    }
}

/// `|X − proj_{span(e₁,e₂)} X| / |X|`, or NaN for a degenerate face.
fn plane_angle(x: &State, e1: &State, e2: &State) -> f64 {
    let n1 = e1.norm();
    if n1 < 1e-14 {
        return f64::NAN;
    }
    let u1 = *e1 * (1.0 / n1);
    let w = *e2 - u1 * u1.dot(e2);
    let n2 = w.norm();
    if n2 < 1e-14 * e2.norm().max(1e-300) {
        return f64::NAN;
    }
    let u2 = w * (1.0 / n2);
    let r = *x - u1 * u1.dot(x) - u2 * u2.dot(x);
    r.norm() / x.norm()
}

/// Checks `η(X) ≥ ε*/2` on every face and that the co-orientation matches the flow.
pub fn verify_transversality(
    s: &FlowScenario,
    p: &ProjectionField,
    leaf: &SectionLeaf,
    eps_star: f64,
) -> Result<TransversalityReport> {
    let r = transversality_report(s, p, leaf, eps_star);
    if !r.passed {
        return Err(Error::Verification(format!(
            "transversality margin violated: min η(X) = {:.3e} < {:.3e} on faces {:?}, {} negative crossings",
            r.min_eta_x, r.threshold, r.offending_faces, r.negative_crossings
        )));
    }
    Ok(r)
}

/// Winding `(n₁, n₂)` of a boundary circle on a link torus, in the tube's `(t, θ)`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryCircle {
    pub component: usize,
    pub n1: i64,
    pub n2: i64,
}

/// Winding pairs of the leaf's boundary loops on the link tori.
pub fn boundary_winding(s: &FlowScenario, leaf: &SectionLeaf) -> Result<Vec<BoundaryCircle>> {
    let d = s.domain();
    let mut out = Vec::new();
    for (component, face, cycle) in leaf.link_loops(d) {
        let FaceKind::Link { collar, .. } = d.faces[face].kind else { unreachable!() };
        let period = s.link()[component].tube.period;
        let (mut dt, mut dth) = (0.0, 0.0);
        for k in 0..cycle.len() {
            let a = collar.apply(&leaf.vertices[cycle[k]]);
            let b = collar.apply(&leaf.vertices[cycle[(k + 1) % cycle.len()]]);
            dt += wrap_signed(b[0] - a[0], period);
            dth += wrap_signed(b[2] - a[2], TAU);
        }
        let (w1, w2) = (dt / period, dth / TAU);
        if (w1 - w1.round()).abs() > 1e-6 || (w2 - w2.round()).abs() > 1e-6 {
            return Err(Error::Mesh(format!("boundary loop on component {component} has winding ({w1}, {w2})")));
        }
        out.push(BoundaryCircle { component, n1: w1.round() as i64, n2: w2.round() as i64 });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DegreeRow {
    pub name: String,
    /// Degree of `pr ∘ c`.
    pub degree: i64,
    /// `∫_c η`.
    pub pairing: f64,
    pub matches: bool,
}

/// Basis loops through a generic point and a meridian loop near every link face.
pub fn standard_loops(s: &FlowScenario) -> Vec<(String, Vec<[f64; 3]>)> {
    let d = s.domain();
    let mut base = [0.0; 3];
    for k in 0..3 {
        base[k] = d.axes[k].lo + 0.37 * d.axes[k].width();
    }
    let mut loops: Vec<(String, Vec<[f64; 3]>)> =
        basis_loops(d, base, 512).into_iter().map(|(k, pts)| (format!("loop:{}", d.axes[k].name), pts)).collect();
    for (component, face, _) in d.link_faces() {
        loops.push((
            format!("meridian:{}", s.link()[component].id),
            meridian_loop(d, face.upper, base[0], 0.3, 512),
        ));
    }
    loops
}

fn degree_table(p: &ProjectionField, loops: &[(String, Vec<[f64; 3]>)]) -> Result<Vec<DegreeRow>> {
    let mut rows = Vec::new();
    for (name, pts) in loops {
        let mut total = 0.0;
        for w in pts.windows(2) {
            total += wrap_signed(p.pr(&w[1]) - p.pr(&w[0]), 1.0);
        }
        let pairing = p.eta.pair_loop(pts)?;
        let degree = total.round() as i64;
        let matches = (total - total.round()).abs() < 1e-6 && (pairing - degree as f64).abs() < 1e-6;
        rows.push(DegreeRow { name: name.clone(), degree, pairing, matches });
    }
    Ok(rows)
}

/// Degree of `pr ∘ c` against `∫_c η` for every loop; all must agree exactly.
pub fn verify_degree(p: &ProjectionField, loops: &[(String, Vec<[f64; 3]>)]) -> Result<Vec<DegreeRow>> {
    let rows = degree_table(p, loops)?;
    if let Some(bad) = rows.iter().find(|r| !r.matches) {
        return Err(Error::Verification(format!(
            "degree of pr along {} is {} but the pairing is {}",
            bad.name, bad.degree, bad.pairing
        )));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReturnStats {
    pub samples: usize,
    /// Return times `t₊ − t₋` between consecutive hits (seconds).
    pub tau_min: f64,
    pub tau_mean: f64,
    pub tau_max: f64,
    pub forward_max: f64,
    pub backward_max: f64,
    pub misses: usize,
    pub cutoff: f64,
    pub histogram: Vec<HistogramBin>,
}

/// Return-time histogram bin `[lo, hi)` (seconds).
#[derive(Debug, Clone, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

const HISTOGRAM_BINS: usize = 20;

fn histogram(taus: &[f64], lo: f64, hi: f64) -> Vec<HistogramBin> {
    if taus.is_empty() {
        return Vec::new();
    }
    let width = (hi - lo).max(1e-12) / HISTOGRAM_BINS as f64;
    let mut bins: Vec<HistogramBin> = (0..HISTOGRAM_BINS)
        .map(|k| HistogramBin { lo: lo + k as f64 * width, hi: lo + (k + 1) as f64 * width, count: 0 })
        .collect();
    for t in taus {
        let k = (((t - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        bins[k].count += 1;
    }
    bins
}

/// First time (elapsed, in the stepper's direction) at which the lift of `pr` reaches the
/// next level `x + m` beyond the start.
fn hitting_time(s: &FlowScenario, p: &ProjectionField, p0: ChartPoint, level: f64, direction: f64, cutoff: f64, tol: f64) -> Result<Option<f64>> {
    let pr = |pt: &ChartPoint| p.pr(&s.manifold_to_domain(pt));
    let opts = AdaptiveOptions::with_tol(tol);
    let mut stepper = Stepper::new(s, p0, opts, direction)?;
    let start = pr(&stepper.point());
    let mut lift = start;
    let target = if direction > 0.0 {
        level + (start - level).floor() + 1.0
    } else {
        level + (start - level).ceil() - 1.0
    };
    let mut prev = start;
    while stepper.time() < cutoff {
        let step = stepper.step(cutoff - stepper.time())?;
        let now = pr(&stepper.point());
        let next_lift = lift + wrap_signed(now - prev, 1.0);
        if (next_lift - target) * direction >= 0.0 {
            // regula falsi (Illinois) on the Hermite interpolant
            let at = |t: f64| {
                let q = ChartPoint { chart: step.start.chart, coords: step.interpolate(t) };
                lift + wrap_signed(pr(&q) - prev, 1.0) - target
            };
            let (mut a, mut b) = (step.t0, step.t1);
            let (mut fa, mut fb) = (lift - target, next_lift - target);
            let mut side = 0;
            for _ in 0..100 {
                let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
                let fc = at(c);
                if fc == 0.0 || (b - a).abs() < 1e-14 {
                    a = c;
                    b = c;
                    break;
                }
                if (fc > 0.0) == (fb > 0.0) {
                    b = c;
                    fb = fc;
                    if side == 1 {
                        fa *= 0.5;
                    }
                    side = 1;
                } else {
                    a = c;
                    fa = fc;
                    if side == -1 {
                        fb *= 0.5;
                    }
                    side = -1;
                }
            }
            return Ok(Some(0.5 * (a + b)));
        }
        lift = next_lift;
        prev = now;
    }
    Ok(None)
}

/// Forward and backward hitting times of the leaf from random starts in the domain.
pub fn return_time_stats(
    s: &FlowScenario,
    p: &ProjectionField,
    leaf: &SectionLeaf,
    n_samples: usize,
    cutoff: f64,
    seed: u64,
    tol: f64,
) -> Result<ReturnStats> {
    let d = s.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<[f64; 3]> = (0..n_samples)
        .map(|_| {
            let mut q = [0.0; 3];
            for k in 0..3 {
                let a = &d.axes[k];
                let u: f64 = if a.periodic { rng.gen::<f64>() } else { rng.gen_range(0.005..0.995) };
                q[k] = a.lo + u * a.width();
            }
            q
        })
        .collect();
    let hits: Vec<Result<Option<(f64, f64)>>> = starts
        .par_iter()
        .map(|q| {
            let p0 = s.domain_to_manifold(q);
            let fwd = hitting_time(s, p, p0, leaf.level, 1.0, cutoff, tol)?;
            let bwd = hitting_time(s, p, p0, leaf.level, -1.0, cutoff, tol)?;
            Ok(fwd.zip(bwd))
        })
        .collect();
    let mut taus = Vec::new();
    let (mut fmax, mut bmax): (f64, f64) = (0.0, 0.0);
    let mut misses = 0;
    for h in hits {
        match h? {
            Some((f, b)) => {
                fmax = fmax.max(f);
                bmax = bmax.max(b);
                taus.push(f + b);
            }
            None => misses += 1,
        }
    }
    let tau_min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau_max = taus.iter().cloned().fold(0.0, f64::max);
    let tau_mean = if taus.is_empty() { f64::NAN } else { taus.iter().sum::<f64>() / taus.len() as f64 };
    Ok(ReturnStats {
        samples: n_samples,
        tau_min,
        tau_mean,
        tau_max,
        forward_max: fmax,
        backward_max: bmax,
        misses,
        cutoff,
        histogram: histogram(&taus, tau_min, tau_max),
    })
}

/// Flows leaf vertices by `X / η(X)` for time `Δ` and returns `max |pr − (x + Δ)|`.
pub fn flow_deformation_residual(s: &FlowScenario, p: &ProjectionField, leaf: &SectionLeaf, delta: f64, samples: usize) -> f64 {
    let interior: Vec<&[f64; 3]> =
        leaf.vertices.iter().zip(&leaf.vertex_face).filter(|(_, f)| f.is_none()).map(|(v, _)| v).collect();
    let stride = (interior.len() / samples.max(1)).max(1);
    let rhs = |_t: f64, y: &State| {
        let q = [y[0], y[1], y[2]];
        let v = s.domain_field(&q);
        let e = p.eta.apply(&q, &v);
        State::from_slice(&[v[0] / e, v[1] / e, v[2] / e])
    };
    interior
        .par_iter()
        .step_by(stride)
        .map(|q| {
            let y = rk4_solve(&rhs, 0.0, State::from_slice(&q[..]), delta, 200);
            wrap_signed(p.pr(&[y[0], y[1], y[2]]) - leaf.level - delta, 1.0).abs()
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SectionVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct SectionReport {
    pub level: f64,
    pub vertices: usize,
    pub faces: usize,
    pub components: usize,
    pub euler_characteristic: i64,
    pub genus: i64,
    pub boundary: Vec<BoundaryCircle>,
    pub transversality: TransversalityReport,
    pub degree: Vec<DegreeRow>,
    pub returns: ReturnStats,
    /// Lower bound `ε* h_min / sup η(X)` on return times (seconds).
    pub return_time_floor: f64,
    pub flow_deformation_residual: f64,
    pub verdict: SectionVerdict,
    pub failures: Vec<String>,
}

/// Runs every section check and aggregates them into a PASS/FAIL verdict.
pub fn verify_global_section(
    s: &FlowScenario,
    class: &DualClass,
    p: &ProjectionField,
    leaf: &SectionLeaf,
    eps_star: f64,
    settings: &SectionSettings,
) -> Result<SectionReport> {
    let mut failures = Vec::new();
    let transversality = transversality_report(s, p, leaf, eps_star);
    if !transversality.passed {
        failures.push(format!(
            "transversality: min η(X) = {:.3e} below {:.3e}, {} negative crossings",
            transversality.min_eta_x, transversality.threshold, transversality.negative_crossings
        ));
    }
    let boundary = boundary_winding(s, leaf)?;
    for (j, data) in class.boundary.iter().enumerate() {
        let circles: Vec<&BoundaryCircle> = boundary.iter().filter(|c| c.component == j).collect();
        if circles.len() != 1 {
            failures.push(format!("component {j}: {} boundary circles, expected 1", circles.len()));
        }
        for c in circles {
            if c.n2 != 0 || c.n1 != data.epsilon as i64 {
                failures.push(format!("component {j}: winding ({}, {}), expected ({}, 0)", c.n1, c.n2, data.epsilon));
            }
        }
    }
    if leaf.components != 1 {
        failures.push(format!("leaf has {} connected components", leaf.components));
    }
    let degree = degree_table(p, &standard_loops(s))?;
    for r in degree.iter().filter(|r| !r.matches) {
        failures.push(format!("degree along {}: {} vs pairing {}", r.name, r.degree, r.pairing));
    }
    let cutoff = settings.cutoff.unwrap_or(10.0 / eps_star);
    let returns = return_time_stats(s, p, leaf, settings.return_samples, cutoff, settings.seed, settings.tol)?;
    if returns.misses > 0 {
        failures.push(format!("{} of {} samples did not return within {cutoff:.3}", returns.misses, returns.samples));
    }
    let sup_eta = p.eta.sweep_bound(s, 16);
    let return_time_floor = eps_star * p.min_spacing() / sup_eta;
    if returns.tau_min < return_time_floor {
        failures.push(format!("return time {:.3e} below the floor {return_time_floor:.3e}", returns.tau_min));
    }
    let flow_deformation_residual = flow_deformation_residual(s, p, leaf, 0.25, 64);
    if flow_deformation_residual > 1e-4 {
        failures.push(format!("flowed leaf misses the next level by {flow_deformation_residual:.3e}"));
    }
    Ok(SectionReport {
        level: leaf.level,
        vertices: leaf.vertices.len(),
        faces: leaf.faces.len(),
        components: leaf.components,
        euler_characteristic: leaf.euler_characteristic,
        genus: leaf.genus,
        boundary,
        transversality,
        degree,
        returns,
        return_time_floor,
        flow_deformation_residual,
        verdict: if failures.is_empty() { SectionVerdict::Pass } else { SectionVerdict::Fail },
        failures,
    })
}
