use std::f64::consts::TAU;

use serde::Serialize;

use crate::boundary::{BoundaryTorusField, B_GRID};
use crate::cohomology::ClosedForm;
use crate::error::{Error, Result};
use crate::geometry::{AdaptiveOptions, ChartPoint, FlowScenario, Stepper};

/// Number of dyadic windows reported by [`birkhoff_average`].
const WINDOWS: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffWindow {
    /// Window end (seconds).
    pub horizon: f64,
    /// `(1/t) ∫₀ᵗ β(X) ds` (1/seconds).
    pub average: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BirkhoffAverage {
    pub value: f64,
    pub horizon: f64,
    /// Cumulative averages at `T/32, T/16, …, T`.
    pub windows: Vec<BirkhoffWindow>,
    /// Spread of the last three windows.
    pub spread: f64,
}

/// `β(X)` at a manifold point.
pub fn beta_along(s: &FlowScenario, beta: &ClosedForm, p: &ChartPoint) -> f64 {
    let q = s.manifold_to_domain(p);
    beta.apply(&q, &s.domain_field(&q))
}

/// `(1/T) ∫₀ᵀ β(X)∘φᵗ(p₀) dt` by Simpson's rule on the adaptive steps.
pub fn birkhoff_average(
    s: &FlowScenario,
    beta: &ClosedForm,
    p0: ChartPoint,
    horizon: f64,
    tol: f64,
) -> Result<BirkhoffAverage> {
    let min = 100.0 * s.characteristic_period();
    if !(horizon >= min) {
        return Err(Error::Domain(format!("horizon {horizon} is shorter than 100 characteristic periods ({min})")));
    }
    let mut stepper = Stepper::new(s, p0, AdaptiveOptions::with_tol(tol), 1.0)?;
    let marks: Vec<f64> = (0..WINDOWS).rev().map(|j| horizon / (1u64 << j) as f64).collect();
    let mut windows = Vec::with_capacity(WINDOWS);
    let mut integral = 0.0;
    let mut f_start = beta_along(s, beta, &stepper.point());
    for &mark in &marks {
        while stepper.time() < mark * (1.0 - 1e-15) {
            let step = stepper.step(mark - stepper.time())?;
            let tm = 0.5 * (step.t0 + step.t1);
            let mid = ChartPoint { chart: step.start.chart, coords: step.interpolate(tm) };
            let f_end = beta_along(s, beta, &stepper.point());
            integral += (step.t1 - step.t0) * (f_start + 4.0 * beta_along(s, beta, &mid) + f_end) / 6.0;
            f_start = f_end;
        }
        windows.push(BirkhoffWindow { horizon: mark, average: integral / stepper.time() });
    }
    let tail = &windows[WINDOWS - 3..];
    let hi = tail.iter().map(|w| w.average).fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().map(|w| w.average).fold(f64::INFINITY, f64::min);
    Ok(BirkhoffAverage { value: windows[WINDOWS - 1].average, horizon, windows, spread: hi - lo })
}

/// An invariant probability measure candidate on a boundary torus.
#[derive(Debug, Clone)]
pub enum TorusMeasure {
    /// Normalized area.
    Area,
    /// Uniform in `t` on the circle `θ = θ₀`.
    Circle { theta: f64 },
    /// Point masses at the `b` grid nodes, row-major in `(t, θ)`.
    Grid { weights: Vec<f64> },
}

const INVARIANCE_MODES: i32 = 3;
const INVARIANCE_TOL: f64 = 1e-6;

/// Quadrature nodes `(t, θ, weight)` of the measure.
fn atoms(b: &BoundaryTorusField, mu: &TorusMeasure) -> Result<Vec<(f64, f64, f64)>> {
    let n = B_GRID;
    Ok(match mu {
        TorusMeasure::Area => (0..b.nt)
            .flat_map(|i| (0..b.ntheta).map(move |j| (i, j)))
            .map(|(i, j)| (b.t_node(i), b.theta_node(j), 1.0 / (b.nt * b.ntheta) as f64))
            .collect(),
        TorusMeasure::Circle { theta } => {
            (0..n).map(|i| (b.period * i as f64 / n as f64, *theta, 1.0 / n as f64)).collect()
        }
        TorusMeasure::Grid { weights } => {
            if weights.len() != b.nt * b.ntheta || weights.iter().any(|w| *w < 0.0) {
                return Err(Error::Residual("grid measure must have one nonnegative weight per node".into()));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > INVARIANCE_TOL {
                return Err(Error::Residual(format!("grid measure has mass {total}, not 1")));
            }
            weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .map(|(k, w)| (b.t_node(k / b.ntheta), b.theta_node(k % b.ntheta), *w))
                .collect()
        }
    })
}

/// `(T/2π) ∫ q b dμ`, the pairing of the torus measure with `β = q dθ`. The measure is first
/// checked for invariance against trigonometric test functions.
pub fn boundary_measure_pairing(b: &BoundaryTorusField, q: f64, period: f64, mu: &TorusMeasure) -> Result<f64> {
    let atoms = atoms(b, mu)?;
    let mut residual: f64 = 0.0;
    for a in -INVARIANCE_MODES..=INVARIANCE_MODES {
        for c in -INVARIANCE_MODES..=INVARIANCE_MODES {
            let wa = TAU * a as f64 / b.period;
            let (mut re, mut im) = (0.0, 0.0);
            for &(t, th, w) in &atoms {
                // d/ds e^{i(a' t + c θ)} along ∂_t + b ∂_θ
                let rate = wa + c as f64 * b.eval(t, th);
                let (s, co) = (wa * t + c as f64 * th).sin_cos();
                re -= w * rate * s;
                im += w * rate * co;
            }
            residual = residual.max(re.hypot(im));
        }
    }
    if residual > INVARIANCE_TOL {
        return Err(Error::Residual(format!("measure is not invariant (residual {residual:.3e})")));
    }
    let integral: f64 = atoms.iter().map(|&(t, th, w)| w * q * b.eval(t, th)).sum();
    Ok(period / TAU * integral)
}
