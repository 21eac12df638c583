//! Blow-up of link components, the boundary torus field `b(t, θ)` and rotation numbers.

mod rotation;
pub mod spline;

use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::FlowScenario;
use crate::orbit::TransverseLinearization;
use spline::PeriodicSpline2;

pub use rotation::{rotation_number, PeriodMap, RotationEstimate, RotationWindow};

/// Default resolution of the `b` grid in each direction.
pub const B_GRID: usize = 256;

/// `b(t, θ) = ⟨A e, i e⟩` for `e = e^{iθ}`.
pub fn angular_rate(a: &nalgebra::Matrix2<f64>, theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    a[(1, 0)] * c * c - a[(0, 1)] * s * s + (a[(1, 1)] - a[(0, 0)]) * c * s
}

/// The field `∂_t + b(t, θ) ∂_θ` on a boundary torus `ℝ/Tℤ × ℝ/2πℤ`.
#[derive(Debug, Clone)]
pub struct BoundaryTorusField {
    pub orbit_id: String,
    pub period: f64,
    pub nt: usize,
    pub ntheta: usize,
    /// `b(t_i, θ_j)` row-major in `(i, j)`.
    pub values: Vec<f64>,
    spline: PeriodicSpline2,
}

impl BoundaryTorusField {
    pub fn from_fn<F: Fn(f64, f64) -> f64 + Sync>(orbit_id: &str, period: f64, nt: usize, ntheta: usize, b: F) -> Self {
        let values: Vec<f64> = (0..nt * ntheta)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / ntheta, k % ntheta);
                b(period * i as f64 / nt as f64, TAU * j as f64 / ntheta as f64)
            })
            .collect();
        let spline = PeriodicSpline2::new(&values, [nt, ntheta], [period, TAU]);
        Self { orbit_id: orbit_id.to_string(), period, nt, ntheta, values, spline }
    }

    /// Builds `b` on an `nt × nθ` grid; `nt` must divide the number of A₂ samples.
    pub fn from_linearization(lin: &TransverseLinearization, nt: usize, ntheta: usize) -> Result<Self> {
        if nt == 0 || lin.a2.len() % nt != 0 {
            return Err(Error::Domain(format!("t-grid {nt} does not divide the A₂ grid {}", lin.a2.len())));
        }
        let stride = lin.a2.len() / nt;
        let a2 = &lin.a2;
        Ok(Self::from_fn(&lin.orbit_id, lin.period, nt, ntheta, |t, theta| {
            let i = (t / lin.period * nt as f64).round() as usize % nt;
            angular_rate(&a2[i * stride], theta)
        }))
    }

    pub fn t_node(&self, i: usize) -> f64 {
        self.period * i as f64 / self.nt as f64
    }

    pub fn theta_node(&self, j: usize) -> f64 {
        TAU * j as f64 / self.ntheta as f64
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[(i % self.nt) * self.ntheta + j % self.ntheta]
    }

    /// Bicubic interpolation of `b`.
    pub fn eval(&self, t: f64, theta: f64) -> f64 {
        self.spline.eval(t, theta)
    }

    pub fn eval_dtheta(&self, t: f64, theta: f64) -> f64 {
        self.spline.eval_dy(t, theta)
    }

    /// `min_t ε b(t, θ)` over the grid rows at a fixed angle.
    pub fn sign_margin(&self, epsilon: f64, theta: f64) -> f64 {
        (0..self.nt).map(|i| epsilon * self.eval(self.t_node(i), theta)).fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Writes the grid as CSV with columns `t, theta, b`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,theta,b")?;
        for i in 0..self.nt {
            for j in 0..self.ntheta {
                writeln!(out, "{:.12e},{:.12e},{:.12e}", self.t_node(i), self.theta_node(j), self.node(i, j))?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// `ρ^y = (T / 2π)(p + q ρ_θ)`.
pub fn rho_y(rho_theta: f64, period: f64, p: f64, q: f64) -> f64 {
    period / TAU * (p + q * rho_theta)
}

/// Change of framing by `m` turns: `(p, q, ρ_θ) ↦ (p − 2πmq/T, q, ρ_θ + 2πm/T)`.
pub fn reframe(p: f64, q: f64, rho_theta: f64, m: i32, period: f64) -> (f64, f64, f64) {
    let shift = TAU * m as f64 / period;
    (p - shift * q, q, rho_theta + shift)
}

const GAUSS_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GAUSS_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Directional derivative `D_w Z(t, w) e` by Richardson-extrapolated central differences.
fn directional(s: &FlowScenario, component: usize, t: f64, w: [f64; 2], e: [f64; 2]) -> [f64; 3] {
    let z = |h: f64| s.tube_field(component, [t, w[0] + h * e[0], w[1] + h * e[1]]);
    let d = |h: f64| {
        let (a, b) = (z(h), z(-h));
        [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h), (a[2] - b[2]) / (2.0 * h)]
    };
    let h = 1e-4;
    let (d1, d2) = (d(h), d(0.5 * h));
    [(4.0 * d2[0] - d1[0]) / 3.0, (4.0 * d2[1] - d1[1]) / 3.0, (4.0 * d2[2] - d1[2]) / 3.0]
}

/// The blown-up field `W(t, r, θ)` in polar tube coordinates, valid down to `r = 0`.
///
/// Writes `Z(t, re) = (1, 0, 0) + r A(t, r, θ) e` with `A e = ∫₀¹ D_w Z(t, τ r e) e dτ`.
pub fn blowup_field(s: &FlowScenario, component: usize, q: [f64; 3]) -> [f64; 3] {
    let [t, r, theta] = q;
    let (sn, cs) = theta.sin_cos();
    let e = [cs, sn];
    let mut ae = [0.0; 3];
    for (x, w) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
        let tau = 0.5 * (x + 1.0);
        let d = directional(s, component, t, [tau * r * cs, tau * r * sn], e);
        for k in 0..3 {
            ae[k] += 0.5 * w * d[k];
        }
    }
    [1.0 + r * ae[0], r * (cs * ae[1] + sn * ae[2]), -sn * ae[1] + cs * ae[2]]
}

/// `DΦ⁻¹ Z` in polar tube coordinates by direct division (requires `r > 0`).
pub fn pulled_back_field(s: &FlowScenario, component: usize, q: [f64; 3]) -> [f64; 3] {
    let [t, r, theta] = q;
    let (sn, cs) = theta.sin_cos();
    let z = s.tube_field(component, [t, r * cs, r * sn]);
    [z[0], cs * z[1] + sn * z[2], (-sn * z[1] + cs * z[2]) / r]
}

/// Fitted constants `C_r = max |W^θ(t, r, θ) − b(t, θ)| / r`.
#[derive(Debug, Clone, Serialize)]
pub struct BlowupFit {
    pub radii: Vec<f64>,
    pub constants: Vec<f64>,
    /// `(max C − min C) / max C`, or 0 when every deviation is at roundoff level.
    pub relative_variation: f64,
    /// Largest `|W^θ − b|` over all radii.
    pub max_deviation: f64,
    /// Largest `|W^r|` at `r = 0`.
    pub radial_at_core: f64,
}

/// Deviations below this are treated as roundoff when fitting `C`.
const ROUNDOFF_FLOOR: f64 = 1e-11;

pub fn blowup_limit_fit(
    s: &FlowScenario,
    component: usize,
    b: &BoundaryTorusField,
    radii: &[f64],
    samples: usize,
) -> BlowupFit {
    let nodes: Vec<(f64, f64)> = (0..samples)
        .flat_map(|i| (0..samples).map(move |j| (i, j)))
        .map(|(i, j)| (b.period * i as f64 / samples as f64, TAU * (j as f64 + 0.5) / samples as f64))
        .collect();
    let mut constants = Vec::new();
    let mut max_dev: f64 = 0.0;
    for &r in radii {
        let dev = nodes
            .par_iter()
            .map(|&(t, th)| (blowup_field(s, component, [t, r, th])[2] - b.eval(t, th)).abs())
            .reduce(|| 0.0, f64::max);
        max_dev = max_dev.max(dev);
        constants.push(dev / r);
    }
    let radial_at_core = nodes
        .par_iter()
        .map(|&(t, th)| blowup_field(s, component, [t, 0.0, th])[1].abs())
        .reduce(|| 0.0, f64::max);
    let hi = constants.iter().cloned().fold(0.0, f64::max);
    let lo = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let relative_variation = if max_dev <= ROUNDOFF_FLOOR { 0.0 } else { (hi - lo) / hi };
    BlowupFit { radii: radii.to_vec(), constants, relative_variation, max_deviation: max_dev, radial_at_core }
}
