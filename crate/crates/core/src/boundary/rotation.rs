use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use super::spline::PeriodicSpline;
use super::BoundaryTorusField;
use crate::error::{Error, Result};
use crate::geometry::{solve, wrap, AdaptiveOptions, State};

/// Resolution of the tabulated period map.
const MAP_NODES: usize = 2048;
const MAP_TOL: f64 = 1e-12;

/// Lift `θ ↦ θ + D(θ)` of the time-`T` map of `θ̇ = b(t, θ)` started at `t₀`.
pub struct PeriodMap {
    pub t0: f64,
    displacement: PeriodicSpline,
    rigid: Option<f64>,
}

impl PeriodMap {
    pub fn new(b: &BoundaryTorusField, t0: f64) -> Self {
        let opts = AdaptiveOptions { tol: MAP_TOL, max_step: 0.05, ..AdaptiveOptions::default() };
        let rhs = |t: f64, y: &State| State::from_slice(&[b.eval(t, y[0])]);
        let disp: Vec<f64> = (0..MAP_NODES)
            .into_par_iter()
            .map(|j| {
                let th = TAU * j as f64 / MAP_NODES as f64;
                solve(&rhs, t0, State::from_slice(&[th]), t0 + b.period, &opts)[0] - th
            })
            .collect();
        // constant displacement: skip interpolation so rigid rotations stay exact
        let first = disp[0];
        let rigid = disp.iter().all(|d| (d - first).abs() <= 1e-14 * (1.0 + first.abs())).then_some(first);
        Self { t0, displacement: PeriodicSpline::new(&disp, TAU), rigid }
    }

    pub fn displacement(&self, theta: f64) -> f64 {
        match self.rigid {
            Some(d) => d,
            None => self.displacement.eval(theta),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationWindow {
    /// Window end `2^k T` (seconds).
    pub horizon: f64,
    /// Seed-averaged estimate on `[2^{k−1} T, 2^k T]` (1/seconds).
    pub estimate: f64,
    /// Spread of the estimate across seeds.
    pub seed_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RotationEstimate {
    /// `lim θ(t)/t` (1/seconds).
    pub rho_theta: f64,
    /// Largest spread across seeds and the last five dyadic windows.
    pub error_bound: f64,
    /// `2π / W` for the final window length `W`; bounds the error of any single window.
    pub rigorous_bound: f64,
    pub windows: Vec<RotationWindow>,
    pub seed_estimates: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Rotation number `lim θ(t; t₀, θ₀)/t` of `θ̇ = b(t, θ)` from several seeds, over horizons
/// up to `horizon_mult · T` (rounded down to a power of two).
pub fn rotation_number(b: &BoundaryTorusField, seeds: &[(f64, f64)], horizon_mult: u64) -> Result<RotationEstimate> {
    if horizon_mult < 16 {
        return Err(Error::Domain(format!("horizon multiple must be at least 16, got {horizon_mult}")));
    }
    if seeds.is_empty() {
        return Err(Error::Domain("at least one seed is required".into()));
    }
    let kmax = 63 - horizon_mult.leading_zeros() as usize;
    let mut starts: Vec<f64> = Vec::new();
    for &(t0, _) in seeds {
        let t0 = wrap(t0, b.period);
        if !starts.contains(&t0) {
            starts.push(t0);
        }
    }
    let maps: Vec<PeriodMap> = starts.iter().map(|&t0| PeriodMap::new(b, t0)).collect();

    // lifted angle after 2^k periods, k = 0..=kmax
    let lifts: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&(t0, th0)| {
            let map = &maps[starts.iter().position(|&s| s == wrap(t0, b.period)).expect("seed map")];
            let mut turns: f64 = 0.0;
            let mut frac = wrap(th0, TAU);
            let mut out = Vec::with_capacity(kmax + 1);
            let mut next_record = 1u64;
            for n in 1..=(1u64 << kmax) {
                let moved = frac + map.displacement(frac);
                let whole = (moved / TAU).floor();
                turns += whole;
                frac = moved - whole * TAU;
                if n == next_record {
                    out.push(turns * TAU + frac - wrap(th0, TAU));
                    next_record <<= 1;
                }
            }
            out
        })
        .collect();

    let mut windows = Vec::new();
    for k in 4..=kmax {
        let w = (1u64 << (k - 1)) as f64 * b.period;
        let est: Vec<f64> = lifts.iter().map(|l| (l[k] - l[k - 1]) / w).collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let spread = est.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - est.iter().cloned().fold(f64::INFINITY, f64::min);
        windows.push(RotationWindow { horizon: (1u64 << k) as f64 * b.period, estimate: mean, seed_spread: spread });
    }
    let w_final = (1u64 << (kmax - 1)) as f64 * b.period;
    let seed_estimates: Vec<f64> = lifts.iter().map(|l| (l[kmax] - l[kmax - 1]) / w_final).collect();
    let rho_theta = windows.last().expect("at least one window").estimate;

    let tail = &windows[windows.len().saturating_sub(5)..];
    let hi = tail.iter().map(|w| w.estimate).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|w| w.estimate).fold(f64::INFINITY, f64::min);
    let seed_spread = tail.iter().map(|w| w.seed_spread).fold(0.0, f64::max);
    let error_bound = (hi - lo).max(seed_spread);

    let mut warnings = Vec::new();
    if windows.len() >= 10 {
        let head = &windows[windows.len() - 10..windows.len() - 5];
        let hi0 = head.iter().map(|w| w.estimate).fold(f64::NEG_INFINITY, f64::max);
        let lo0 = head.iter().map(|w| w.estimate).fold(f64::INFINITY, f64::min);
        if hi - lo > (hi0 - lo0) && hi - lo > 1e-12 {
            warnings.push(format!(
                "window spread did not decrease: {:.3e} over the last five windows vs {:.3e} before",
                hi - lo,
                hi0 - lo0
            ));
        }
    }
    Ok(RotationEstimate { rho_theta, error_bound, rigorous_bound: TAU / w_final, windows, seed_estimates, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeds(period: f64) -> Vec<(f64, f64)> {
        (0..8).map(|k| (period * k as f64 / 8.0, 0.77 * k as f64)).collect()
    }

    #[test]
    fn rigid_rotation() {
        let b = BoundaryTorusField::from_fn("rigid", TAU, 64, 64, |_, _| 0.3);
        let est = rotation_number(&b, &seeds(TAU), 1 << 10).unwrap();
        assert!((est.rho_theta - 0.3).abs() < 1e-9);
        assert!(est.error_bound < 1e-9);
    }

    #[test]
    fn attracting_fixed_points() {
        let b = BoundaryTorusField::from_fn("hyp", TAU, 64, 256, |_, th| -0.5 * (2.0 * th).sin());
        let est = rotation_number(&b, &seeds(TAU), 1 << 10).unwrap();
        assert!(est.rho_theta.abs() < 1e-9, "{}", est.rho_theta);
    }

    #[test]
    fn small_horizon_rejected() {
        let b = BoundaryTorusField::from_fn("rigid", TAU, 8, 8, |_, _| 0.3);
        assert!(rotation_number(&b, &[(0.0, 0.0)], 8).is_err());
    }
}
