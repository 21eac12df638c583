//! Tubular coordinates `Ψ: N → ℝ/Tℤ × 𝔻` around link components.
//!
//! Each chart is first written in Cartesian form `(t, X, Y)` and the polar form
//! `(t, r, θ)` is derived from it. The Cartesian map is generic over `RealField` so
//! that pushforwards can be evaluated exactly with dual numbers.

use std::f64::consts::{FRAC_PI_4, TAU};

use nalgebra::RealField;
use num_dual::Dual64;
use serde::Serialize;

use super::state::{wrap, wrap_signed, State};
use crate::error::{Error, Result};

/// Inclination radius of the geodesic equator tubes (radians).
pub const GEODESIC_TUBE_INCLINATION: f64 = FRAC_PI_4;

/// Tolerance on `r ≤ 1` when testing membership in the tube.
const TUBE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TubeKind {
    /// Axis-parallel closed orbit `x₁ ↦ x₁ + ω₁ t` of a T³ flow through `(·, c₂, c₃)`.
    TorusAxis { omega1: f64, center: [f64; 2], radius: f64 },
    /// Core of the solid-torus model; ambient coordinates `(t, x, y)`.
    SolidCore,
    /// Core of a linear block tube; ambient coordinates `(t, x, y)`.
    LinearCore,
    /// Fiber `{z₂ = 0}` of the Hopf flow; ambient coordinates in ℝ⁴.
    HopfFiber,
    /// Equator of S² traversed eastwards (`reversed = false`) or westwards.
    GeodesicEquator { reversed: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TubularChart {
    pub orbit_id: String,
    pub period: f64,
    /// Alignment sign ε: meridian pairing of the class this chart is aligned with.
    pub sign: i32,
    /// Framing twist m: `θ' = θ + 2π m t / T`.
    pub twist: i32,
    pub kind: TubeKind,
}

fn sq<T: RealField + Copy>(x: T) -> T {
    x * x
}

fn c<T: RealField + Copy>(x: f64) -> T {
    nalgebra::convert(x)
}

/// `asin(√u)/√u` for small `u`.
fn asin_ratio_series<T: RealField + Copy>(u: T) -> T {
    c::<T>(1.0) + u * (c::<T>(1.0 / 6.0) + u * (c::<T>(3.0 / 40.0) + u * c::<T>(5.0 / 112.0)))
}

/// Rotation `(x, y, z) ↦ (x, −y, −z)` exchanging the two equator orientations.
fn flip<T: RealField + Copy>(x: &[T]) -> [T; 6] {
    [x[0], -x[1], -x[2], x[3], -x[4], -x[5]]
}

/// Cartesian tube coordinates of a unit tangent vector near the eastward equator.
/// `base` is the same point in `f64`, used for branch selection only.
fn geodesic_cartesian<T: RealField + Copy>(base: &[f64; 6], x: &[T; 6]) -> [T; 3] {
    let (p, v) = ([x[0], x[1], x[2]], [x[3], x[4], x[5]]);
    let n = [p[1] * v[2] - p[2] * v[1], p[2] * v[0] - p[0] * v[2], p[0] * v[1] - p[1] * v[0]];
    let u = sq(p[2]) + sq(v[2]);
    let u_base = base[2] * base[2] + base[5] * base[5];
    let ratio = if u_base < 1e-6 {
        asin_ratio_series(u)
    } else {
        let sigma = u.sqrt();
        sigma.atan2(n[2]) / sigma
    };
    let scale = ratio / c::<T>(GEODESIC_TUBE_INCLINATION);
    // rotate n to e3 about e3 × n and read off the longitude of the rotated position
    let w = [-n[1], n[0]];
    let cz = n[2];
    let wdotp = w[0] * p[0] + w[1] * p[1];
    let denom = c::<T>(1.0) + cz;
    // (w × p) with w = (w0, w1, 0)
    let wxp = [w[1] * p[2], -w[0] * p[2]];
    let rx = cz * p[0] - wxp[0] + w[0] * wdotp / denom;
    let ry = cz * p[1] - wxp[1] + w[1] * wdotp / denom;
    [ry.atan2(rx), scale * v[2], scale * p[2]]
}

/// Unit tangent vector `(x, v)` with node longitude Ω, inclination ι and argument of latitude s.
pub fn geodesic_from_elements(omega: f64, iota: f64, s: f64) -> ([f64; 3], [f64; 3]) {
    let (so, co) = omega.sin_cos();
    let (si, ci) = iota.sin_cos();
    let (ss, cs) = s.sin_cos();
    let a = [co, so, 0.0];
    let b = [-ci * so, ci * co, si];
    let x = [cs * a[0] + ss * b[0], cs * a[1] + ss * b[1], cs * a[2] + ss * b[2]];
    let v = [-ss * a[0] + cs * b[0], -ss * a[1] + cs * b[1], -ss * a[2] + cs * b[2]];
    (x, v)
}

/// Domain coordinates `(u, ι, s)` of a unit tangent vector: true longitude, inclination,
/// argument of latitude. `u` is computed in the chart of the nearer equator.
pub fn geodesic_elements(x: &[f64]) -> [f64; 3] {
    let n = [x[1] * x[5] - x[2] * x[4], x[2] * x[3] - x[0] * x[5], x[0] * x[4] - x[1] * x[3]];
    let iota = n[0].hypot(n[1]).atan2(n[2]);
    let s = x[2].atan2(x[5]);
    let base: [f64; 6] = [x[0], x[1], x[2], x[3], x[4], x[5]];
    let u = if n[2] >= 0.0 {
        geodesic_cartesian(&base, &base)[0]
    } else {
        let flipped = flip(&base);
        let t_minus = geodesic_cartesian(&flipped, &flipped)[0];
        2.0 * s - t_minus
    };
    [wrap(u, TAU), iota, wrap(s, TAU)]
}

impl TubularChart {
    pub fn new(orbit_id: &str, period: f64, sign: i32, kind: TubeKind) -> Self {
        Self { orbit_id: orbit_id.to_string(), period, sign, twist: 0, kind }
    }

    /// Same tube with the framing rotated by `m` full turns along the orbit.
    pub fn with_twist(&self, m: i32) -> Self {
        Self { twist: self.twist + m, ..self.clone() }
    }

    pub fn with_sign(&self, sign: i32) -> Self {
        Self { sign, ..self.clone() }
    }

    /// Dimension of the ambient coordinates this tube reads.
    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            TubeKind::HopfFiber => 4,
            TubeKind::GeodesicEquator { .. } => 6,
            _ => 3,
        }
    }

    fn twist_angle(&self, t: f64) -> f64 {
        TAU * self.twist as f64 * t / self.period
    }

    /// Generic Cartesian map `(t, X, Y)` with `t` unwrapped. Branches are chosen from `base`.
    pub fn cartesian_generic<T: RealField + Copy>(&self, base: &[f64], x: &[T]) -> [T; 3] {
        let [t, xx, yy] = match &self.kind {
            TubeKind::TorusAxis { omega1, center, radius } => {
                let s2 = wrap_signed(base[1] - center[0], 1.0) - (base[1] - center[0]);
                let s3 = wrap_signed(base[2] - center[1], 1.0) - (base[2] - center[1]);
                [
                    x[0] / c::<T>(*omega1),
                    (x[1] - c::<T>(center[0]) + c::<T>(s2)) / c::<T>(*radius),
                    (x[2] - c::<T>(center[1]) + c::<T>(s3)) / c::<T>(*radius),
                ]
            }
            TubeKind::SolidCore | TubeKind::LinearCore => [x[0], x[1], x[2]],
            TubeKind::HopfFiber => [x[1].atan2(x[0]), x[2], x[3]],
            TubeKind::GeodesicEquator { reversed } => {
                let b: [f64; 6] = [base[0], base[1], base[2], base[3], base[4], base[5]];
                let xs: [T; 6] = [x[0], x[1], x[2], x[3], x[4], x[5]];
                if *reversed {
                    geodesic_cartesian(&flip(&b), &flip(&xs))
                } else {
                    geodesic_cartesian(&b, &xs)
                }
            }
        };
        if self.twist == 0 {
            return [t, xx, yy];
        }
        let phi = t * c::<T>(TAU * self.twist as f64 / self.period);
        let (s, co) = (phi.sin(), phi.cos());
        [t, co * xx - s * yy, s * xx + co * yy]
    }

    /// `(t, X, Y)` with `t ∈ [0, T)`.
    pub fn to_cartesian(&self, x: &[f64]) -> [f64; 3] {
        let [t, xx, yy] = self.cartesian_generic(x, x);
        [wrap(t, self.period), xx, yy]
    }

    /// Inverse of [`Self::to_cartesian`], returning ambient coordinates.
    pub fn from_cartesian(&self, q: [f64; 3]) -> State {
        let [t, mut xx, mut yy] = q;
        if self.twist != 0 {
            let (s, co) = self.twist_angle(t).sin_cos();
            (xx, yy) = (co * xx + s * yy, -s * xx + co * yy);
        }
        match &self.kind {
            TubeKind::TorusAxis { omega1, center, radius } => State::from_slice(&[
                wrap(omega1 * t, 1.0),
                wrap(center[0] + radius * xx, 1.0),
                wrap(center[1] + radius * yy, 1.0),
            ]),
            TubeKind::SolidCore | TubeKind::LinearCore => State::from_slice(&[wrap(t, self.period), xx, yy]),
            TubeKind::HopfFiber => {
                let rho1 = (1.0 - xx * xx - yy * yy).max(0.0).sqrt();
                State::from_slice(&[rho1 * t.cos(), rho1 * t.sin(), xx, yy])
            }
            TubeKind::GeodesicEquator { reversed } => {
                let i = GEODESIC_TUBE_INCLINATION * xx.hypot(yy);
                let s = yy.atan2(xx);
                let (p, v) = geodesic_from_elements(t - s, i, s);
                let out = [p[0], p[1], p[2], v[0], v[1], v[2]];
                let out = if *reversed { flip(&out) } else { out };
                State::from_slice(&out)
            }
        }
    }

    /// Polar tube coordinates `(t, r, θ)`; θ is meaningless on the core (`r = 0`).
    pub fn to_tubular(&self, x: &[f64]) -> Result<[f64; 3]> {
        if x.len() != self.ambient_dim() {
            return Err(Error::Domain(format!(
                "tube '{}' expects {} ambient coordinates, got {}",
                self.orbit_id,
                self.ambient_dim(),
                x.len()
            )));
        }
        if let TubeKind::GeodesicEquator { reversed } = self.kind {
            let nz = x[0] * x[4] - x[1] * x[3];
            if (nz <= 0.0) != reversed {
                return Err(Error::Domain(format!("point outside tube '{}'", self.orbit_id)));
            }
        }
        let [t, xx, yy] = self.to_cartesian(x);
        let r = xx.hypot(yy);
        if r > 1.0 + TUBE_SLACK {
            return Err(Error::Domain(format!("point outside tube '{}' (r = {r:.6})", self.orbit_id)));
        }
        Ok([t, r.min(1.0), wrap(yy.atan2(xx), TAU)])
    }

    pub fn from_tubular(&self, q: [f64; 3]) -> Result<State> {
        let [t, r, theta] = q;
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Domain(format!("radius {r} outside [0, 1]")));
        }
        Ok(self.from_cartesian([t, r * theta.cos(), r * theta.sin()]))
    }

    /// `DΨ(x)·v` in Cartesian tube coordinates.
    pub fn pushforward(&self, x: &[f64], v: &[f64]) -> [f64; 3] {
        let dual: Vec<Dual64> = x.iter().zip(v).map(|(a, b)| Dual64::new(*a, *b)).collect();
        let out = self.cartesian_generic(x, &dual);
        [out[0].eps, out[1].eps, out[2].eps]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hopf_point(t: f64, rho: f64, sigma: f64) -> [f64; 4] {
        let r1 = (1.0 - rho * rho).sqrt();
        [r1 * t.cos(), r1 * t.sin(), rho * sigma.cos(), rho * sigma.sin()]
    }

    #[test]
    fn hopf_tube_reads_the_fiber_angle_and_z2() {
        let tube = TubularChart::new("fiber", TAU, 1, TubeKind::HopfFiber);
        let q = tube.to_tubular(&hopf_point(1.2, 0.4, 2.5)).unwrap();
        assert!((q[0] - 1.2).abs() < 1e-14 && (q[1] - 0.4).abs() < 1e-14 && (q[2] - 2.5).abs() < 1e-14);
    }

    #[test]
    fn hopf_round_trip() {
        let tube = TubularChart::new("fiber", TAU, 1, TubeKind::HopfFiber);
        for k in 0..40 {
            let q = [0.15 * k as f64 % TAU, 1e-6 + 0.0249 * k as f64, 0.7 * k as f64 % TAU];
            let x = tube.from_tubular(q).unwrap();
            let back = tube.to_tubular(x.as_slice()).unwrap();
            assert!(wrap_signed(back[0] - q[0], TAU).abs() < 1e-10);
            assert!((back[1] - q[1]).abs() < 1e-10);
            assert!(wrap_signed(back[2] - q[2], TAU).abs() < 1e-10);
        }
    }

    #[test]
    fn geodesic_elements_match_tube_on_the_collar() {
        let tube = TubularChart::new("e+", TAU, 1, TubeKind::GeodesicEquator { reversed: false });
        let (x, v) = geodesic_from_elements(0.4, 0.3, 1.1);
        let p = [x[0], x[1], x[2], v[0], v[1], v[2]];
        let q = tube.to_tubular(&p).unwrap();
        let e = geodesic_elements(&p);
        assert!((q[0] - e[0]).abs() < 1e-12);
        assert!((q[1] - 0.3 / GEODESIC_TUBE_INCLINATION).abs() < 1e-12);
        assert!((q[2] - 1.1).abs() < 1e-12);
        assert!((e[0] - 1.5).abs() < 1e-12 && (e[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn reversed_equator_collar_map() {
        let tube = TubularChart::new("e-", TAU, 1, TubeKind::GeodesicEquator { reversed: true });
        let (omega, iota, s) = (0.9, std::f64::consts::PI - 0.2, 2.0);
        let (x, v) = geodesic_from_elements(omega, iota, s);
        let p = [x[0], x[1], x[2], v[0], v[1], v[2]];
        let q = tube.to_tubular(&p).unwrap();
        let e = geodesic_elements(&p);
        assert!(wrap_signed(q[0] - (2.0 * e[2] - e[0]), TAU).abs() < 1e-12);
        assert!((q[1] - 0.2 / GEODESIC_TUBE_INCLINATION).abs() < 1e-12);
        assert!(wrap_signed(q[2] - (s - std::f64::consts::PI), TAU).abs() < 1e-12);
        assert!(wrap_signed(e[0] - (omega + s), TAU).abs() < 1e-12);
    }

    #[test]
    fn geodesic_round_trip_including_tiny_radius() {
        for reversed in [false, true] {
            let tube = TubularChart::new("e", TAU, 1, TubeKind::GeodesicEquator { reversed });
            for k in 0..30 {
                let q = [0.21 * k as f64 % TAU, 1e-6 + 0.033 * k as f64, 0.57 * k as f64 % TAU];
                let x = tube.from_tubular(q).unwrap();
                let back = tube.to_tubular(x.as_slice()).unwrap();
                assert!(wrap_signed(back[0] - q[0], TAU).abs() < 1e-10, "{q:?} {back:?}");
                assert!((back[1] - q[1]).abs() < 1e-10);
                assert!(wrap_signed(back[2] - q[2], TAU).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn twisted_round_trip() {
        let tube = TubularChart::new("core", TAU, 1, TubeKind::SolidCore).with_twist(2);
        let q = [1.0, 0.5, 0.3];
        let x = tube.from_tubular(q).unwrap();
        let back = tube.to_tubular(x.as_slice()).unwrap();
        assert!((back[1] - 0.5).abs() < 1e-14 && (back[2] - 0.3).abs() < 1e-12);
        assert!((wrap_signed(x[2].atan2(x[1]) - (0.3 - 2.0), TAU)).abs() < 1e-12);
    }

    #[test]
    fn dual_pushforward_matches_finite_difference() {
        let tube = TubularChart::new("e+", TAU, 1, TubeKind::GeodesicEquator { reversed: false });
        let (x, v) = geodesic_from_elements(0.3, 0.5, 0.8);
        let p = [x[0], x[1], x[2], v[0], v[1], v[2]];
        let dir = [v[0], v[1], v[2], -x[0], -x[1], -x[2]];
        let z = tube.pushforward(&p, &dir);
        let h = 1e-6;
        let shift = |s: f64| -> [f64; 6] {
            let mut out = [0.0; 6];
            for i in 0..6 {
                out[i] = p[i] + s * dir[i];
            }
            out
        };
        let a = tube.cartesian_generic(&p, &shift(h));
        let b = tube.cartesian_generic(&p, &shift(-h));
        for i in 0..3 {
            assert!((z[i] - (a[i] - b[i]) / (2.0 * h)).abs() < 1e-7);
        }
    }
}
