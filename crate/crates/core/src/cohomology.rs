//! The dual class `y^b` and closed 1-form representatives on the blown-up domain.
//!
//! Forms are written in domain box coordinates as `β = Σ c_k dq_k + dG` with constant
//! `c_k` on the periodic axes and an optional exact part `dG` supported away from the
//! link faces. Near each link face the constant part equals `p dt + q dθ` in tube
//! coordinates, so `β` has bounded coefficients by construction.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_signed, DomainSpec, FaceKind, FlowScenario};

/// Collar width (in units of the radial axis) on which forms are exactly `p dt + q dθ`.
pub const R_CUT: f64 = 0.2;
const INTEGRALITY_TOL: f64 = 1e-9;

/// Per-boundary data of the class: `(p_j, q_j)` in the aligned tube and the sign `ε_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryData {
    pub p: f64,
    pub q: f64,
    pub epsilon: i32,
}

/// A degree-one class on `M ∖ L`, given by its boundary data and its pairings with the
/// loop basis (one loop per periodic domain axis).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualClass {
    pub boundary: Vec<BoundaryData>,
    /// `(axis, pairing)` for every periodic domain axis.
    pub pairings: Vec<(usize, i64)>,
}

fn periodic_axes(d: &DomainSpec) -> Vec<usize> {
    (0..3).filter(|&k| d.axes[k].periodic).collect()
}

/// Tube covector `(A, B, C)` of the constant form with domain coefficients `c` at a face.
fn tube_covector(c: &[f64; 3], collar: &crate::geometry::CollarMap) -> [f64; 3] {
    let m = nalgebra::Matrix3::from_fn(|i, j| collar.matrix[i][j]);
    let inv = m.try_inverse().expect("collar maps are invertible");
    // β_domain = β_tube · M  ⇒  β_tube = β_domain · M⁻¹
    let mut out = [0.0; 3];
    for (j, o) in out.iter_mut().enumerate() {
        for i in 0..3 {
            *o += c[i] * inv[(i, j)];
        }
    }
    out
}

impl DualClass {
    /// Class with the given pairings on the periodic axes (in axis order).
    pub fn from_pairings(s: &FlowScenario, pairings: &[i64]) -> Result<Self> {
        let d = s.domain();
        let axes = periodic_axes(d);
        if pairings.len() != axes.len() {
            return Err(Error::Class(format!(
                "expected {} loop pairings (one per periodic axis), got {}",
                axes.len(),
                pairings.len()
            )));
        }
        let pairs: Vec<(usize, i64)> = axes.iter().cloned().zip(pairings.iter().cloned()).collect();
        let coeffs = coefficients(d, &pairs);
        let mut boundary = Vec::new();
        for (component, _, collar) in d.link_faces() {
            let [a, _, c] = tube_covector(&coeffs, collar);
            let epsilon = (c * TAU).round() as i32;
            if boundary.len() <= component {
                boundary.resize(component + 1, BoundaryData { p: 0.0, q: 0.0, epsilon: 0 });
            }
            // normalize so that q = ε
            boundary[component] = BoundaryData { p: a * TAU, q: c * TAU, epsilon };
        }
        let class = Self { boundary, pairings: pairs };
        class.validate(s)?;
        Ok(class)
    }

    /// Class determined by the boundary data of an aligned chart. The `(p_j, q_j)` may use
    /// any positive normalization; only their direction and `ε_j` matter.
    pub fn from_boundary(s: &FlowScenario, boundary: &[BoundaryData]) -> Result<Self> {
        let d = s.domain();
        let faces: Vec<_> = d.link_faces().collect();
        if boundary.len() != s.link().len() || faces.is_empty() {
            return Err(Error::Class(format!(
                "boundary data for {} components given, scenario has {} link components",
                boundary.len(),
                s.link().len()
            )));
        }
        let mut coeffs: Option<[f64; 3]> = None;
        for (component, _, collar) in faces {
            let b = boundary[component];
            if b.epsilon.abs() != 1 {
                return Err(Error::Class(format!("ε must be ±1, got {}", b.epsilon)));
            }
            if b.p != 0.0 {
                return Err(Error::Class(format!(
                    "component {component}: p = {} ≠ 0, the tube is not aligned with the class",
                    b.p
                )));
            }
            if b.q * b.epsilon as f64 <= 0.0 {
                return Err(Error::Class(format!("component {component}: sign of q disagrees with ε")));
            }
            let tube = [0.0, 0.0, b.epsilon as f64 / TAU];
            let c = collar.pull_covector(&tube);
            match coeffs {
                None => coeffs = Some(c),
                Some(prev) => {
                    if (0..3).any(|k| (prev[k] - c[k]).abs() > 1e-12) {
                        return Err(Error::Class("boundary data of different components are not realizable by one closed form".into()));
                    }
                }
            }
        }
        let coeffs = coeffs.expect("at least one link face");
        let mut pairings = Vec::new();
        for k in periodic_axes(d) {
            let v = coeffs[k] * d.axes[k].width();
            if (v - v.round()).abs() > INTEGRALITY_TOL {
                return Err(Error::Class(format!("pairing {v} with the {} loop is not an integer", d.axes[k].name)));
            }
            pairings.push((k, v.round() as i64));
        }
        let class = Self { boundary: boundary.to_vec(), pairings };
        class.validate(s)?;
        Ok(class)
    }

    /// Checks that the class is realizable by a form in `Ω¹_L` on this scenario and that
    /// every tube is aligned with it.
    pub fn validate(&self, s: &FlowScenario) -> Result<()> {
        let d = s.domain();
        let coeffs = coefficients(d, &self.pairings);
        for f in &d.faces {
            if let FaceKind::Collapsed { axis } = f.kind {
                if coeffs[axis] != 0.0 {
                    return Err(Error::Class(format!(
                        "nonzero pairing with the {} loop, which bounds a disk",
                        d.axes[axis].name
                    )));
                }
            }
        }
        for (component, _, collar) in d.link_faces() {
            let [a, _, c] = tube_covector(&coeffs, collar);
            if a.abs() > 1e-12 {
                return Err(Error::Class(format!("longitude pairing of component {component} is {}, not 0", a * s.link()[component].tube.period)));
            }
            let meridian = c * TAU;
            if ((meridian.abs()) - 1.0).abs() > INTEGRALITY_TOL {
                return Err(Error::Class(format!("meridian pairing of component {component} is {meridian}, not ±1")));
            }
            if let Some(b) = self.boundary.get(component) {
                if b.epsilon as f64 != meridian.round() {
                    return Err(Error::Class(format!("ε of component {component} disagrees with the meridian pairing")));
                }
                if b.p.abs() > 1e-12 || b.q * c <= 0.0 {
                    return Err(Error::Class(format!("(p, q) of component {component} is not a positive multiple of (0, ε/2π)")));
                }
            }
        }
        Ok(())
    }

    /// Constant domain coefficients `c_k = pairing_k / period_k`.
    pub fn coefficients(&self, s: &FlowScenario) -> [f64; 3] {
        coefficients(s.domain(), &self.pairings)
    }
}

fn coefficients(d: &DomainSpec, pairings: &[(usize, i64)]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &(k, v) in pairings {
        c[k] = v as f64 / d.axes[k].width();
    }
    c
}

/// A smooth function on the domain box, used for exact parts of forms.
pub trait Potential: Send + Sync + std::fmt::Debug {
    fn value(&self, q: &[f64; 3]) -> f64;
    fn gradient(&self, q: &[f64; 3]) -> [f64; 3];
}

/// Smooth radial cutoff: 0 on `[0, R_CUT]`, 1 near `1/2`, 0 on `[1 − R_CUT, 1]`.
fn cutoff(x: f64) -> (f64, f64) {
    if x <= R_CUT || x >= 1.0 - R_CUT {
        return (0.0, 0.0);
    }
    let w = 1.0 - 2.0 * R_CUT;
    let a = PI * (x - R_CUT) / w;
    (a.sin().powi(2), 2.0 * a.sin() * a.cos() * PI / w)
}

/// `a · ψ(q_r) · sin(2π (k·q) )` with a cutoff `ψ` in the non-periodic axis (if any).
#[derive(Debug, Clone)]
pub struct BumpPotential {
    pub amplitude: f64,
    pub modes: [i32; 3],
    periods: [f64; 3],
    radial: Option<(usize, f64, f64)>,
}

impl BumpPotential {
    pub fn new(d: &DomainSpec, amplitude: f64, modes: [i32; 3]) -> Self {
        let radial = d.radial_axis().map(|k| (k, d.axes[k].lo, d.axes[k].width()));
        let mut periods = [1.0; 3];
        for k in 0..3 {
            periods[k] = d.axes[k].width();
        }
        Self { amplitude, modes, periods, radial }
    }

    fn phase(&self, q: &[f64; 3]) -> (f64, [f64; 3]) {
        let mut arg = 0.0;
        let mut darg = [0.0; 3];
        for k in 0..3 {
            if self.radial.map(|r| r.0) == Some(k) {
                continue;
            }
            let w = TAU * self.modes[k] as f64 / self.periods[k];
            arg += w * q[k];
            darg[k] = w;
        }
        (arg, darg)
    }
}

impl Potential for BumpPotential {
    fn value(&self, q: &[f64; 3]) -> f64 {
        let (arg, _) = self.phase(q);
        let radial = self.radial.map_or(1.0, |(k, lo, w)| cutoff((q[k] - lo) / w).0);
        self.amplitude * radial * arg.sin()
    }

    fn gradient(&self, q: &[f64; 3]) -> [f64; 3] {
        let (arg, darg) = self.phase(q);
        let (psi, dpsi) = self.radial.map_or((1.0, 0.0), |(k, lo, w)| {
            let (v, d) = cutoff((q[k] - lo) / w);
            (v, d / w)
        });
        let mut g = [0.0; 3];
        for k in 0..3 {
            g[k] = self.amplitude * psi * arg.cos() * darg[k];
        }
        if let Some((k, _, _)) = self.radial {
            g[k] = self.amplitude * dpsi * arg.sin();
        }
        g
    }
}

/// A closed 1-form `Σ c_k dq_k + dG` on the blown-up domain.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub coeffs: [f64; 3],
    pub potential: Option<Arc<dyn Potential>>,
    periods: [Option<f64>; 3],
}

impl ClosedForm {
    pub fn constant(d: &DomainSpec, coeffs: [f64; 3]) -> Self {
        let mut periods = [None; 3];
        for k in 0..3 {
            if d.axes[k].periodic {
                periods[k] = Some(d.axes[k].width());
            }
        }
        Self { coeffs, potential: None, periods }
    }

    pub fn with_potential(mut self, g: Arc<dyn Potential>) -> Self {
        self.potential = Some(g);
        self
    }

    /// `self + dg`, keeping any existing exact part.
    pub fn plus_exact(&self, g: Arc<dyn Potential>) -> Self {
        let mut out = self.clone();
        out.potential = Some(match &self.potential {
            None => g,
            Some(h) => Arc::new(Sum(h.clone(), g)),
        });
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in &mut out.coeffs {
            *c *= factor;
        }
        if let Some(g) = &self.potential {
            out.potential = Some(Arc::new(Scaled(g.clone(), factor)));
        }
        out
    }

    pub fn potential_value(&self, q: &[f64; 3]) -> f64 {
        self.potential.as_ref().map_or(0.0, |g| g.value(q))
    }

    pub fn covector(&self, q: &[f64; 3]) -> [f64; 3] {
        let mut w = self.coeffs;
        if let Some(g) = &self.potential {
            let d = g.gradient(q);
            for k in 0..3 {
                w[k] += d[k];
            }
        }
        w
    }

    /// `β(v)` at `q`.
    pub fn apply(&self, q: &[f64; 3], v: &[f64; 3]) -> f64 {
        let w = self.covector(q);
        w[0] * v[0] + w[1] * v[1] + w[2] * v[2]
    }

    /// Difference `b − a` with periodic axes unwrapped to the nearest image.
    pub fn delta(&self, a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for k in 0..3 {
            d[k] = b[k] - a[k];
            if let Some(p) = self.periods[k] {
                d[k] = wrap_signed(d[k], p);
            }
        }
        d
    }

    /// Exact integral along the straight segment from `a` to `a + delta`.
    pub fn segment_integral(&self, a: &[f64; 3], delta: &[f64; 3]) -> f64 {
        let b = [a[0] + delta[0], a[1] + delta[1], a[2] + delta[2]];
        let lin: f64 = (0..3).map(|k| self.coeffs[k] * delta[k]).sum();
        lin + self.potential_value(&b) - self.potential_value(a)
    }

    /// `∫_loop β` by Simpson's rule on each segment. The loop is a list of domain points whose
    /// consecutive differences are taken modulo the periods; it must close up.
    pub fn pair_loop(&self, points: &[[f64; 3]]) -> Result<f64> {
        if points.len() < 2 {
            return Err(Error::Domain("loop needs at least two points".into()));
        }
        let (first, last) = (points[0], points[points.len() - 1]);
        let gap = self.delta(&first, &last);
        if gap.iter().any(|g| g.abs() > 1e-8) {
            return Err(Error::Domain(format!("loop is not closed (gap {gap:?})")));
        }
        let mut total = 0.0;
        for w in points.windows(2) {
            let d = self.delta(&w[0], &w[1]);
            let at = |s: f64| {
                let q = [w[0][0] + s * d[0], w[0][1] + s * d[1], w[0][2] + s * d[2]];
                self.apply(&q, &d)
            };
            total += (at(0.0) + 4.0 * at(0.5) + at(1.0)) / 6.0;
        }
        Ok(total)
    }

    /// `β(X)` using the analytic domain field of the scenario.
    pub fn beta_of_x(&self, s: &FlowScenario, q: &[f64; 3]) -> f64 {
        self.apply(q, &s.domain_field(q))
    }

    /// `sup |β(X)|` over an `n³` cell-centred sweep of the domain.
    pub fn sweep_bound(&self, s: &FlowScenario, n: usize) -> f64 {
        let d = s.domain();
        (0..n * n * n)
            .into_par_iter()
            .map(|idx| {
                let ijk = [idx / (n * n), (idx / n) % n, idx % n];
                let mut q = [0.0; 3];
                for k in 0..3 {
                    q[k] = d.axes[k].lo + d.axes[k].width() * (ijk[k] as f64 + 0.5) / n as f64;
                }
                self.beta_of_x(s, &q).abs()
            })
            .reduce(|| 0.0, f64::max)
    }
}

#[derive(Debug)]
struct Sum(Arc<dyn Potential>, Arc<dyn Potential>);

impl Potential for Sum {
    fn value(&self, q: &[f64; 3]) -> f64 {
        self.0.value(q) + self.1.value(q)
    }
    fn gradient(&self, q: &[f64; 3]) -> [f64; 3] {
        let (a, b) = (self.0.gradient(q), self.1.gradient(q));
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
}

#[derive(Debug)]
struct Scaled(Arc<dyn Potential>, f64);

impl Potential for Scaled {
    fn value(&self, q: &[f64; 3]) -> f64 {
        self.1 * self.0.value(q)
    }
    fn gradient(&self, q: &[f64; 3]) -> [f64; 3] {
        let g = self.0.gradient(q);
        [self.1 * g[0], self.1 * g[1], self.1 * g[2]]
    }
}

/// Closed representative of `y` with constant coefficients, plus an optional exact part.
pub fn nice_representative(y: &DualClass, s: &FlowScenario) -> Result<ClosedForm> {
    y.validate(s)?;
    Ok(ClosedForm::constant(s.domain(), y.coefficients(s)))
}

/// The loop basis: one straight loop along each periodic axis through `base`.
pub fn basis_loops(d: &DomainSpec, base: [f64; 3], samples: usize) -> Vec<(usize, Vec<[f64; 3]>)> {
    (0..3)
        .filter(|&k| d.axes[k].periodic)
        .map(|k| {
            let pts = (0..=samples)
                .map(|i| {
                    let mut q = base;
                    q[k] = base[k] + d.axes[k].width() * i as f64 / samples as f64;
                    q
                })
                .collect();
            (k, pts)
        })
        .collect()
}

/// Meridian loop of a link face at normalized distance `r` from the face.
pub fn meridian_loop(d: &DomainSpec, face_upper: bool, t: f64, r: f64, samples: usize) -> Vec<[f64; 3]> {
    let radial = d.radial_axis().expect("link faces sit on the radial axis");
    let a = &d.axes[radial];
    let rq = if face_upper { a.hi - r * a.width() } else { a.lo + r * a.width() };
    let theta_axis = 2;
    (0..=samples)
        .map(|i| {
            let mut q = [t, rq, 0.0];
            q[theta_axis] = d.axes[theta_axis].width() * i as f64 / samples as f64;
            q
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RadialProfile;

    #[test]
    fn t3_representative_is_constant() {
        let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
        let y = DualClass::from_pairings(&s, &[1, 0, 0]).unwrap();
        let beta = nice_representative(&y, &s).unwrap();
        assert_eq!(beta.coeffs, [1.0, 0.0, 0.0]);
        assert!((beta.beta_of_x(&s, &[0.3, 0.2, 0.9]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solid_torus_meridian_class() {
        let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
        let y = DualClass::from_boundary(&s, &[BoundaryData { p: 0.0, q: 1.0, epsilon: 1 }]).unwrap();
        assert_eq!(y.pairings, vec![(0, 0), (2, 1)]);
        let beta = nice_representative(&y, &s).unwrap();
        assert!((beta.coeffs[2] - 1.0 / TAU).abs() < 1e-15);
        assert!((beta.beta_of_x(&s, &[0.1, 0.5, 1.0]) - 1.0 / TAU).abs() < 1e-15);
    }

    #[test]
    fn misaligned_and_collapsed_classes_are_rejected() {
        let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
        assert!(DualClass::from_boundary(&s, &[BoundaryData { p: 0.5, q: 1.0, epsilon: 1 }]).is_err());
        assert!(DualClass::from_pairings(&s, &[1, 1]).is_err());
        assert!(DualClass::from_pairings(&s, &[0, 2]).is_err());
        let h = FlowScenario::hopf();
        assert!(DualClass::from_pairings(&h, &[1, 1]).is_err());
        assert!(DualClass::from_pairings(&h, &[0, 1]).is_ok());
    }
}
