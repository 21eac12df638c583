use super::integrate::{dopri_step, hermite, initial_step, rk4_step, step_factor, AdaptiveOptions};
use super::scenario::{ChartPoint, FlowScenario};
use super::state::State;
use crate::error::{Error, Result};

/// One accepted step, expressed in the chart of its start point. `end` is the raw
/// end state before wrapping, projection and chart transition, so that
/// [`Step::interpolate`] is continuous across the step.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub t0: f64,
    pub t1: f64,
    pub start: ChartPoint,
    pub end: State,
    pub f0: State,
    pub f1: State,
}

impl Step {
    pub fn interpolate(&self, t: f64) -> State {
        hermite(self.t0, &self.start.coords, &self.f0, self.t1, &self.end, &self.f1, t)
    }

    /// Velocity of the Hermite interpolant.
    pub fn interpolate_velocity(&self, t: f64) -> State {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let (y0, y1) = (&self.start.coords, &self.end);
        let mut out = State::zeros(y0.len());
        for i in 0..y0.len() {
            let dh00 = 6.0 * s * s - 6.0 * s;
            let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
            let dh01 = -6.0 * s * s + 6.0 * s;
            let dh11 = 3.0 * s * s - 2.0 * s;
            out[i] = (dh00 * y0[i] + dh01 * y1[i]) / h + dh10 * self.f0[i] + dh11 * self.f1[i];
        }
        out
    }
}

/// Adaptive stepper for `φᵗ` across the atlas, forward (`direction = 1`) or backward (`-1`).
pub struct Stepper<'a> {
    scenario: &'a FlowScenario,
    opts: AdaptiveOptions,
    direction: f64,
    t: f64,
    point: ChartPoint,
    f: State,
    h: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(scenario: &'a FlowScenario, p0: ChartPoint, opts: AdaptiveOptions, direction: f64) -> Result<Self> {
        let p0 = scenario.settle(scenario.project(p0))?;
        let f = scenario.eval_field(&p0)? * direction;
        let h = initial_step(&f, &opts);
        Ok(Self { scenario, opts, direction, t: 0.0, point: p0, f, h })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn point(&self) -> ChartPoint {
        self.point
    }

    /// Takes one accepted step of elapsed time at most `limit` (time runs in `direction`;
    /// `t` counts elapsed time and is always increasing).
    pub fn step(&mut self, limit: f64) -> Result<Step> {
        let chart = self.point.chart;
        let dir = self.direction;
        let scenario = self.scenario;
        let rhs = |_t: f64, x: &State| scenario.field(chart, x) * dir;
        loop {
            let hh = self.h.min(limit).min(self.opts.max_step);
            let trial = dopri_step(&rhs, self.t, &self.point.coords, &self.f, hh, self.opts.tol);
            self.h = (hh * step_factor(trial.err)).max(self.opts.min_step);
            if !trial.y.is_finite() {
                return Err(Error::Integration {
                    t: self.t,
                    reason: "non-finite state".into(),
                    partial: vec![(self.t, self.point)],
                });
            }
            if trial.err > 1.0 && hh > self.opts.min_step {
                continue;
            }
            let step = Step {
                t0: self.t,
                t1: self.t + hh,
                start: self.point,
                end: trial.y,
                f0: self.f,
                f1: trial.f_new,
            };
            let moved = scenario.project(ChartPoint { chart, coords: trial.y });
            let settled = scenario.settle(moved).map_err(|e| Error::Integration {
                t: step.t1,
                reason: e.to_string(),
                partial: vec![(step.t0, step.start)],
            })?;
            self.t = step.t1;
            self.point = settled;
            self.f = scenario.field(settled.chart, &settled.coords) * dir;
            return Ok(step);
        }
    }
}

/// Time-stamped chart points of a trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, ChartPoint)>,
}

impl Trajectory {
    pub fn end(&self) -> ChartPoint {
        self.samples.last().expect("nonempty trajectory").1
    }
}

/// Integrates `φᵗ(p₀)` for `t ∈ [0, t_span]` (negative spans run backwards).
pub fn integrate_trajectory(s: &FlowScenario, p0: ChartPoint, t_span: f64, tol: f64) -> Result<Trajectory> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let opts = AdaptiveOptions::with_tol(tol);
    let direction = if t_span >= 0.0 { 1.0 } else { -1.0 };
    let total = t_span.abs();
    let mut stepper = Stepper::new(s, p0, opts, direction)?;
    let mut samples = vec![(0.0, stepper.point())];
    while stepper.time() < total {
        let remaining = total - stepper.time();
        match stepper.step(remaining) {
            Ok(step) => {
                let t = if remaining - (step.t1 - step.t0) <= 1e-14 * total.max(1.0) { total } else { step.t1 };
                samples.push((direction * t, stepper.point()));
                if t == total {
                    break;
                }
            }
            Err(Error::Integration { t, reason, .. }) => {
                return Err(Error::Integration { t: direction * t, reason, partial: samples });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { samples })
}

/// Endpoint of `φᵗ(p)`.
pub fn flow(s: &FlowScenario, p: ChartPoint, t: f64, tol: f64) -> Result<ChartPoint> {
    let opts = AdaptiveOptions::with_tol(tol);
    let direction = if t >= 0.0 { 1.0 } else { -1.0 };
    let total = t.abs();
    let mut stepper = Stepper::new(s, p, opts, direction)?;
    while total - stepper.time() > 1e-14 * total.max(1.0) {
        stepper.step(total - stepper.time())?;
    }
    Ok(stepper.point())
}

/// Fixed-step RK4 endpoint (reproducibility reference).
pub fn flow_rk4(s: &FlowScenario, p: ChartPoint, t: f64, n: usize) -> Result<ChartPoint> {
    let h = t / n as f64;
    let mut point = s.settle(s.project(p))?;
    for i in 0..n {
        let chart = point.chart;
        let rhs = |_t: f64, x: &State| s.field(chart, x);
        let y = rk4_step(&rhs, i as f64 * h, &point.coords, h);
        point = s.settle(s.project(ChartPoint { chart, coords: y }))?;
    }
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ChartId, RadialProfile};
    use std::f64::consts::TAU;

    #[test]
    fn t3_unit_time_returns_mod_one() {
        let s = FlowScenario::t3_linear([1.0, 0.0, 0.0]);
        let end = flow(&s, ChartPoint::new(0, &[0.0, 0.0, 0.0]), 1.0, 1e-12).unwrap();
        let d = s.chart(ChartId(0)).delta(&end.coords, &State::zeros(3));
        assert!(d.max_abs() <= 1e-10, "{end:?}");
    }

    #[test]
    fn hopf_period() {
        let s = FlowScenario::hopf();
        let z0 = [0.6, 0.0, 0.48, 0.64];
        let end = flow(&s, ChartPoint::new(0, &z0), TAU, 1e-11).unwrap();
        assert!((end.coords - State::from_slice(&z0)).norm() <= 1e-8);
    }

    #[test]
    fn equatorial_geodesic_closes() {
        let s = FlowScenario::geodesic();
        let p = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let end = flow(&s, ChartPoint::new(0, &p), TAU, 1e-11).unwrap();
        assert!((end.coords - State::from_slice(&p)).norm() <= 1e-8);
    }

    #[test]
    fn constraints_hold_over_long_runs() {
        let s = FlowScenario::geodesic();
        let traj = integrate_trajectory(&s, ChartPoint::new(0, &[0.6, 0.0, 0.8, 0.0, 1.0, 0.0]), 100.0, 1e-9).unwrap();
        assert!(traj.samples.iter().all(|(_, p)| s.constraint_residual(p) <= 1e-8));
        let h = FlowScenario::hopf();
        let traj = integrate_trajectory(&h, ChartPoint::new(0, &[0.6, 0.0, 0.0, 0.8]), 100.0, 1e-9).unwrap();
        assert!(traj.samples.iter().all(|(_, p)| h.constraint_residual(p) <= 1e-8));
        assert!((traj.samples.last().unwrap().0 - 100.0).abs() < 1e-12);
    }

    #[test]
    fn chart_transitions_agree_with_single_chart_run() {
        // a radial profile makes the solid-torus orbit cross between the polar and core charts
        // only if r changes, so use the core chart close to the overlap instead
        let s = FlowScenario::solid_torus(RadialProfile { coeffs: vec![1.0, 1.0] }, TAU);
        let p_polar = ChartPoint::new(0, &[0.0, 0.26, 0.3]);
        let p_core = s.convert(&p_polar, ChartId(1)).unwrap();
        let a = flow(&s, p_polar, 3.7, 1e-11).unwrap();
        let b = flow(&s, p_core, 3.7, 1e-11).unwrap();
        let a = s.to_canonical(&a);
        let b = s.to_canonical(&b);
        assert!(s.chart(ChartId(1)).delta(&a, &b).max_abs() < 1e-8);
    }

    #[test]
    fn leaving_the_atlas_returns_partial_path() {
        let s = FlowScenario::linear_block([[0.5, 0.0], [0.0, -0.5]], TAU);
        match integrate_trajectory(&s, ChartPoint::new(0, &[0.0, 0.5, 0.1]), 10.0, 1e-9) {
            Err(Error::Integration { partial, t, .. }) => {
                assert!(partial.len() > 1);
                assert!(t > 1.4 && t < 1.6, "{t}"); // 0.5 e^{t/2} = 1.05
            }
            other => panic!("expected integration error, got {other:?}"),
        }
    }

    #[test]
    fn backward_flow_inverts_forward_flow() {
        let s = FlowScenario::geodesic();
        let p = ChartPoint::new(0, &[0.6, 0.0, 0.8, 0.0, 1.0, 0.0]);
        let q = flow(&s, p, 2.3, 1e-11).unwrap();
        let back = flow(&s, q, -2.3, 1e-11).unwrap();
        assert!((back.coords - p.coords).norm() < 1e-8);
    }

    #[test]
    fn rk4_reference_agrees_with_adaptive() {
        let s = FlowScenario::hopf();
        let p = ChartPoint::new(0, &[0.6, 0.0, 0.0, 0.8]);
        let a = flow(&s, p, 1.0, 1e-12).unwrap();
        let b = flow_rk4(&s, p, 1.0, 2000).unwrap();
        assert!((a.coords - b.coords).norm() < 1e-10);
    }
}
