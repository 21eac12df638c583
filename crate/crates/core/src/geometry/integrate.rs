//! Embedded Dormand–Prince 5(4) pair and a classic fixed-step RK4.

use super::state::State;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size policy for the adaptive pair.
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    /// Local error tolerance (used both as absolute and relative tolerance).
    pub tol: f64,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_step: 0.05, min_step: 1e-12, max_steps: 50_000_000 }
    }
}

impl AdaptiveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Result of one trial step.
pub struct TrialStep {
    pub y: State,
    /// Derivative at the new point (FSAL stage).
    pub f_new: State,
    /// Scaled error norm; the step is acceptable when this is ≤ 1.
    pub err: f64,
}

/// One Dormand–Prince step from `(t, y)` with derivative `f0 = f(t, y)`.
pub fn dopri_step<F>(f: &F, t: f64, y: &State, f0: &State, h: f64, tol: f64) -> TrialStep
where
    F: Fn(f64, &State) -> State,
{
    let k1 = *f0;
    let k2 = f(t + C2 * h, &y.axpy(h * A21, &k1));
    let y3 = y.axpy(h * A31, &k1).axpy(h * A32, &k2);
    let k3 = f(t + C3 * h, &y3);
    let y4 = y.axpy(h * A41, &k1).axpy(h * A42, &k2).axpy(h * A43, &k3);
    let k4 = f(t + C4 * h, &y4);
    let y5 = y
        .axpy(h * A51, &k1)
        .axpy(h * A52, &k2)
        .axpy(h * A53, &k3)
        .axpy(h * A54, &k4);
    let k5 = f(t + C5 * h, &y5);
    let y6 = y
        .axpy(h * A61, &k1)
        .axpy(h * A62, &k2)
        .axpy(h * A63, &k3)
        .axpy(h * A64, &k4)
        .axpy(h * A65, &k5);
    let k6 = f(t + h, &y6);
    let y_new = y
        .axpy(h * B1, &k1)
        .axpy(h * B3, &k3)
        .axpy(h * B4, &k4)
        .axpy(h * B5, &k5)
        .axpy(h * B6, &k6);
    let k7 = f(t + h, &y_new);

    let mut err_sq = 0.0;
    for i in 0..y.len() {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = tol * (1.0 + y[i].abs().max(y_new[i].abs()));
        err_sq += (e / scale).powi(2);
    }
    let err = (err_sq / y.len() as f64).sqrt();
    TrialStep { y: y_new, f_new: k7, err }
}

/// Step-size update factor for an error norm (order-5 controller).
pub fn step_factor(err: f64) -> f64 {
    if err == 0.0 {
        5.0
    } else {
        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
    }
}

/// Initial step heuristic.
pub fn initial_step(f0: &State, opts: &AdaptiveOptions) -> f64 {
    let n = f0.max_abs().max(1e-10);
    (0.01 / n).min(opts.max_step).max(opts.min_step)
}

/// Integrates a plain ODE from `t0` to `t1` (either direction) and returns the end state.
pub fn solve<F>(f: &F, t0: f64, y0: State, t1: f64, opts: &AdaptiveOptions) -> State
where
    F: Fn(f64, &State) -> State,
{
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0;
    let mut f0 = f(t, &y);
    let mut h = initial_step(&f0, opts);
    let mut steps = 0;
    while dir * (t1 - t) > 0.0 {
        steps += 1;
        assert!(steps < opts.max_steps, "step budget exhausted");
        let remaining = (t1 - t).abs();
        let hh = h.min(remaining).min(opts.max_step);
        let trial = dopri_step(f, t, &y, &f0, dir * hh, opts.tol);
        if trial.err <= 1.0 || hh <= opts.min_step {
            t = if hh == remaining { t1 } else { t + dir * hh };
            y = trial.y;
            f0 = trial.f_new;
        }
        h = (hh * step_factor(trial.err)).max(opts.min_step);
    }
    y
}

/// Classic fourth-order Runge–Kutta step.
pub fn rk4_step<F>(f: &F, t: f64, y: &State, h: f64) -> State
where
    F: Fn(f64, &State) -> State,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &y.axpy(0.5 * h, &k1));
    let k3 = f(t + 0.5 * h, &y.axpy(0.5 * h, &k2));
    let k4 = f(t + h, &y.axpy(h, &k3));
    y.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4)
}

/// Fixed-step RK4 over `[t0, t1]` with `n` steps.
pub fn rk4_solve<F>(f: &F, t0: f64, y0: State, t1: f64, n: usize) -> State
where
    F: Fn(f64, &State) -> State,
{
    let h = (t1 - t0) / n as f64;
    let mut y = y0;
    for i in 0..n {
        y = rk4_step(f, t0 + i as f64 * h, &y, h);
    }
    y
}

/// Cubic Hermite interpolation on `[t0, t1]` from endpoint values and derivatives.
pub fn hermite(t0: f64, y0: &State, f0: &State, t1: f64, y1: &State, f1: &State, t: f64) -> State {
    let h = t1 - t0;
    if h == 0.0 {
        return *y0;
    }
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = State::zeros(y0.len());
    for i in 0..y0.len() {
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i];
    }
    out
}
