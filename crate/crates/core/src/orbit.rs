//! Periodic-orbit refinement, transverse linearization and monodromy.

use nalgebra::{Complex, DMatrix, DVector, Matrix2};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{flow, wrap_signed, ChartPoint, FlowScenario, State};

/// Integration tolerance used by refinement and linearization.
const ORBIT_TOL: f64 = 1e-12;
const MAX_NEWTON: usize = 50;
const CLOSURE_TOL: f64 = 1e-8;
const PRIMITIVE_TOL: f64 = 1e-6;
/// Default number of A₂ samples per period.
pub const A2_GRID: usize = 2048;

#[derive(Debug, Clone)]
pub struct PeriodicOrbit {
    pub orbit_id: String,
    pub period: f64,
    /// Uniform t-grid over one period (canonical chart coordinates).
    pub samples: Vec<(f64, ChartPoint)>,
    /// `|φ^T(p₀) − p₀|`.
    pub residual: f64,
    pub newton_iterations: usize,
}

impl PeriodicOrbit {
    pub fn start(&self) -> ChartPoint {
        self.samples[0].1
    }
}

fn canonical_delta(s: &FlowScenario, a: &State, b: &State) -> State {
    s.chart(s.canonical_chart()).delta(a, b)
}

/// Canonical coordinates of `φᵗ(x)`.
fn flow_canonical(s: &FlowScenario, x: &State, t: f64) -> Result<State> {
    let p = s.from_canonical(*x)?;
    Ok(s.to_canonical(&flow(s, p, t, ORBIT_TOL)?))
}

fn closure_defect(s: &FlowScenario, x: &State, t: f64) -> Result<f64> {
    let end = flow_canonical(s, x, t)?;
    Ok(canonical_delta(s, x, &end).norm())
}

/// Newton refinement of a periodic orbit through the hyperplane `⟨x − seed, X(seed)⟩ = 0`.
pub fn refine_periodic_orbit(s: &FlowScenario, orbit_id: &str, seed: ChartPoint, t_guess: f64) -> Result<PeriodicOrbit> {
    if !(t_guess > 0.0) {
        return Err(Error::Domain(format!("period guess must be positive, got {t_guess}")));
    }
    let chart = s.canonical_chart();
    let seed_x = s.to_canonical(&s.project(seed));
    let normal = s.field(chart, &seed_x);
    let n = seed_x.len();

    let residual_vector = |x: &State, t: f64| -> Result<(DVector<f64>, State)> {
        let end = flow_canonical(s, x, t)?;
        let d = canonical_delta(s, x, &end);
        let p = ChartPoint { chart, coords: *x };
        let constraints = s.constraint_gradients(&p).len();
        let mut f = DVector::zeros(n + 1 + constraints);
        for i in 0..n {
            f[i] = d[i];
        }
        f[n] = canonical_delta(s, &seed_x, x).dot(&normal);
        let xx = x.dot(x);
        match constraints {
            1 => f[n + 1] = 0.5 * (xx - 1.0),
            3 => {
                let pos = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let vel = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
                f[n + 1] = 0.5 * (pos - 1.0);
                f[n + 2] = 0.5 * (vel - 1.0);
                f[n + 3] = x[0] * x[3] + x[1] * x[4] + x[2] * x[5];
            }
            _ => {}
        }
        Ok((f, end))
    };

    let mut x = seed_x;
    let mut period = t_guess;
    let (mut f, mut end) = residual_vector(&x, period)?;
    let mut norm = f.norm();
    for iter in 0..MAX_NEWTON {
        let closure = canonical_delta(s, &x, &end).norm();
        if closure <= 1e-11 && s.constraint_residual(&ChartPoint { chart, coords: x }) <= 1e-12 {
            return finish(s, orbit_id, x, period, iter);
        }
        let rows = f.len();
        let mut j = DMatrix::zeros(rows, n + 1);
        let cols: Vec<Result<State>> = (0..n)
            .into_par_iter()
            .map(|k| {
                let h = 1e-7;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let ep = flow_canonical(s, &xp, period)?;
                let em = flow_canonical(s, &xm, period)?;
                Ok(canonical_delta(s, &em, &ep) * (0.5 / h))
            })
            .collect();
        for (k, col) in cols.into_iter().enumerate() {
            let col = col?;
            for i in 0..n {
                j[(i, k)] = col[i] - if i == k { 1.0 } else { 0.0 };
            }
            j[(n, k)] = normal[k];
        }
        let fe = s.field(chart, &end);
        for i in 0..n {
            j[(i, n)] = fe[i];
        }
        for (c, g) in s.constraint_gradients(&ChartPoint { chart, coords: x }).iter().enumerate() {
            for k in 0..n {
                j[(n + 1 + c, k)] = g[k];
            }
        }
        let step = j
            .svd(true, true)
            .solve(&(-&f), 1e-10)
            .map_err(|_| Error::Refinement { iterations: iter, residual: norm })?;
        let mut damping = 1.0;
        loop {
            let mut xn = x;
            for k in 0..n {
                xn[k] += damping * step[k];
            }
            let tn = period + damping * step[n];
            let xn = s.to_canonical(&s.project(ChartPoint { chart, coords: xn }));
            let trial = residual_vector(&xn, tn);
            if let Ok((fnew, endn)) = trial {
                if fnew.norm() < norm || damping < 1e-3 {
                    x = xn;
                    period = tn;
                    f = fnew;
                    end = endn;
                    norm = f.norm();
                    break;
                }
            }
            damping *= 0.5;
            if damping < 1e-3 {
                return Err(Error::Refinement { iterations: iter + 1, residual: norm });
            }
        }
    }
    let closure = canonical_delta(s, &x, &end).norm();
    if closure <= CLOSURE_TOL {
        return finish(s, orbit_id, x, period, MAX_NEWTON);
    }
    Err(Error::Refinement { iterations: MAX_NEWTON, residual: closure })
}

fn finish(s: &FlowScenario, orbit_id: &str, x: State, period: f64, iterations: usize) -> Result<PeriodicOrbit> {
    let residual = closure_defect(s, &x, period)?;
    if residual > CLOSURE_TOL {
        return Err(Error::Refinement { iterations, residual });
    }
    for k in 2..=6 {
        if closure_defect(s, &x, period / k as f64)? <= PRIMITIVE_TOL {
            return Err(Error::Domain(format!(
                "period {period} of orbit '{orbit_id}' is not primitive (closes at T/{k})"
            )));
        }
    }
    let m = 256;
    let dt = period / m as f64;
    let mut samples = Vec::with_capacity(m);
    let mut p = s.from_canonical(x)?;
    for k in 0..m {
        samples.push((k as f64 * dt, ChartPoint { chart: s.canonical_chart(), coords: s.to_canonical(&p) }));
        p = flow(s, p, dt, ORBIT_TOL)?;
    }
    Ok(PeriodicOrbit { orbit_id: orbit_id.to_string(), period, samples, residual, newton_iterations: iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitClass {
    Elliptic,
    Hyperbolic,
    Parabolic,
}

#[derive(Debug, Clone)]
pub struct TransverseLinearization {
    pub orbit_id: String,
    pub component: usize,
    pub period: f64,
    /// `A₂(t_k, 0)` at tube times `t_k = k T / n`.
    pub a2: Vec<Matrix2<f64>>,
    pub monodromy: Matrix2<f64>,
    /// Largest `|∂Z/∂t|` and `|Z − (1,0,0)|` along the core.
    pub first_column_residual: f64,
    /// Largest deviation of the sampled orbit from `Ψ = (t, 0)`.
    pub alignment_residual: f64,
    /// `|M(T) − Dφ^T|` with `Dφ^T` by finite differences of the flow.
    pub reintegration_residual: f64,
}

/// Richardson-extrapolated central difference.
fn richardson<F: Fn(f64) -> [f64; 3]>(g: F, h: f64) -> [f64; 3] {
    let d = |h: f64| {
        let (a, b) = (g(h), g(-h));
        [(a[0] - b[0]) / (2.0 * h), (a[1] - b[1]) / (2.0 * h), (a[2] - b[2]) / (2.0 * h)]
    };
    let (d1, d2) = (d(h), d(0.5 * h));
    [(4.0 * d2[0] - d1[0]) / 3.0, (4.0 * d2[1] - d1[1]) / 3.0, (4.0 * d2[2] - d1[2]) / 3.0]
}

/// `DZ(t, 0)` columns `∂_X Z`, `∂_Y Z` at a core point.
pub fn transverse_derivative(s: &FlowScenario, component: usize, t: f64) -> (Matrix2<f64>, [f64; 2]) {
    let dx = richardson(|h| s.tube_field(component, [t, h, 0.0]), 1e-3);
    let dy = richardson(|h| s.tube_field(component, [t, 0.0, h]), 1e-3);
    (Matrix2::new(dx[1], dy[1], dx[2], dy[2]), [dx[0], dy[0]])
}

/// Transverse block `A₂(t, 0)` of `DZ` along a refined core orbit, and its monodromy.
pub fn transverse_block(s: &FlowScenario, orbit: &PeriodicOrbit, component: usize) -> Result<TransverseLinearization> {
    let tube = &s
        .link()
        .get(component)
        .ok_or_else(|| Error::Domain(format!("no link component {component}")))?
        .tube;
    let period = orbit.period;
    let t_start = tube.to_tubular(orbit.start().coords.as_slice())?[0];
    let mut alignment: f64 = 0.0;
    for (t, p) in &orbit.samples {
        let q = tube.to_tubular(p.coords.as_slice())?;
        if q[1] > 1e-6 {
            return Err(Error::Domain(format!(
                "orbit '{}' is not the core of tube '{}' (r = {:.3e})",
                orbit.orbit_id, tube.orbit_id, q[1]
            )));
        }
        alignment = alignment.max(q[1]).max(wrap_signed(q[0] - t_start - t, tube.period).abs());
    }
    if (tube.period - period).abs() > 1e-8 {
        return Err(Error::Domain(format!("tube period {} differs from orbit period {period}", tube.period)));
    }

    let n = A2_GRID;
    let dt = period / n as f64;
    let rows: Vec<(Matrix2<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 * dt;
            let (a2, _) = transverse_derivative(s, component, t);
            let z0 = s.tube_field(component, [t, 0.0, 0.0]);
            let dzdt = richardson(|h| s.tube_field(component, [t + h, 0.0, 0.0]), 1e-3);
            let resid = (z0[0] - 1.0).abs().max(z0[1].abs()).max(z0[2].abs()).max(dzdt.iter().fold(0.0, |m, v| m.max(v.abs())));
            (a2, resid)
        })
        .collect();
    let first_column_residual = rows.iter().fold(0.0_f64, |m, r| m.max(r.1));
    let a2: Vec<Matrix2<f64>> = rows.into_iter().map(|r| r.0).collect();
    let monodromy = monodromy_from_grid(&a2, period);

    let h = 1e-5;
    let mut fd = Matrix2::zeros();
    for col in 0..2 {
        let mut end = [[0.0; 3]; 2];
        for (slot, sign) in [1.0, -1.0].iter().enumerate() {
            let mut q = [0.0, 0.0, 0.0];
            q[1 + col] = sign * h;
            let p = s.from_canonical(tube.from_cartesian(q))?;
            let e = flow(s, p, period, ORBIT_TOL)?;
            end[slot] = tube.to_cartesian(s.to_canonical(&e).as_slice());
        }
        fd[(0, col)] = (end[0][1] - end[1][1]) / (2.0 * h);
        fd[(1, col)] = (end[0][2] - end[1][2]) / (2.0 * h);
    }
    let reintegration_residual = (fd - monodromy).amax();

    Ok(TransverseLinearization {
        orbit_id: orbit.orbit_id.clone(),
        component,
        period,
        a2,
        monodromy,
        first_column_residual,
        alignment_residual: alignment,
        reintegration_residual,
    })
}

/// `M(T)` for `Ṁ = A₂(t) M` by RK4 on a uniform grid (stages at grid points), with one
/// Richardson extrapolation between steps `2Δt` and `4Δt`.
pub fn monodromy_from_grid(a2: &[Matrix2<f64>], period: f64) -> Matrix2<f64> {
    let fine = rk4_on_grid(a2, period, 1);
    if a2.len() % 4 != 0 {
        return fine;
    }
    let coarse = rk4_on_grid(a2, period, 2);
    (fine * 16.0 - coarse) / 15.0
}

fn rk4_on_grid(a2: &[Matrix2<f64>], period: f64, stride: usize) -> Matrix2<f64> {
    let n = a2.len();
    let h = 2.0 * stride as f64 * period / n as f64;
    let at = |k: usize| a2[k % n];
    let mut m = Matrix2::identity();
    for step in 0..n / (2 * stride) {
        let k0 = 2 * stride * step;
        let (a0, a1, a2k) = (at(k0), at(k0 + stride), at(k0 + 2 * stride));
        let k1 = a0 * m;
        let k2 = a1 * (m + k1 * (0.5 * h));
        let k3 = a1 * (m + k2 * (0.5 * h));
        let k4 = a2k * (m + k3 * h);
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    m
}

/// `exp(∫₀ᵀ tr A₂ dt)` by the trapezoidal rule (spectral for periodic integrands).
pub fn liouville_determinant(a2: &[Matrix2<f64>], period: f64) -> f64 {
    let dt = period / a2.len() as f64;
    (a2.iter().map(|a| a.trace()).sum::<f64>() * dt).exp()
}

/// Eigenvalues of `M(T)`.
pub fn monodromy_multipliers(lin: &TransverseLinearization) -> [Complex<f64>; 2] {
    eigenvalues(&lin.monodromy)
}

pub fn eigenvalues(m: &Matrix2<f64>) -> [Complex<f64>; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = 0.25 * tr * tr - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = 0.5 * tr + r.copysign(tr);
        let small = if big != 0.0 { det / big } else { 0.5 * tr - r };
        let (a, b) = if big >= small { (big, small) } else { (small, big) };
        [Complex::new(a, 0.0), Complex::new(b, 0.0)]
    } else {
        let im = (-disc).sqrt();
        [Complex::new(0.5 * tr, im), Complex::new(0.5 * tr, -im)]
    }
}

pub fn abs_c(z: Complex<f64>) -> f64 {
    z.re.hypot(z.im)
}

pub fn classify_orbit(mult: &[Complex<f64>; 2], tol: f64) -> OrbitClass {
    let real = mult.iter().all(|l| l.im.abs() <= tol * abs_c(*l).max(1.0));
    let off_circle = mult.iter().all(|l| (abs_c(*l) - 1.0).abs() > tol);
    if real && off_circle {
        return OrbitClass::Hyperbolic;
    }
    let on_circle = mult.iter().all(|l| (abs_c(*l) - 1.0).abs() <= tol);
    let away_from_one = mult.iter().all(|l| abs_c(l - Complex::new(1.0, 0.0)) > tol && abs_c(l + Complex::new(1.0, 0.0)) > tol);
    if on_circle && away_from_one {
        OrbitClass::Elliptic
    } else {
        OrbitClass::Parabolic
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RadialProfile;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn classification_cases() {
        let c = |a: f64, b: f64| Complex::new(a, b);
        assert_eq!(classify_orbit(&[c(PI.exp(), 0.0), c((-PI).exp(), 0.0)], 1e-6), OrbitClass::Hyperbolic);
        let (s, co) = (0.6 * PI).sin_cos();
        assert_eq!(classify_orbit(&[c(co, s), c(co, -s)], 1e-6), OrbitClass::Elliptic);
        assert_eq!(classify_orbit(&[c(1.0, 0.0), c(1.0, 0.0)], 1e-6), OrbitClass::Parabolic);
        assert_eq!(classify_orbit(&[c(-1.0, 0.0), c(-1.0, 0.0)], 1e-6), OrbitClass::Parabolic);
        assert_eq!(classify_orbit(&[c(2.0, 0.0), c(0.5 + 1e-3, 0.0)], 1e-6), OrbitClass::Hyperbolic);
    }

    #[test]
    fn rotation_monodromy_on_grid() {
        let w = 0.3;
        let a2 = vec![Matrix2::new(0.0, -w, w, 0.0); 512];
        let m = monodromy_from_grid(&a2, TAU);
        let l = eigenvalues(&m);
        let expected = Complex::new((0.6 * PI).cos(), (0.6 * PI).sin());
        assert!(abs_c(l[0] - expected) < 1e-6 || abs_c(l[1] - expected) < 1e-6);
    }

    #[test]
    fn core_refinement_converges_to_the_axis() {
        let s = FlowScenario::solid_torus(RadialProfile { coeffs: vec![0.3, 1.0] }, TAU);
        let orbit = refine_periodic_orbit(&s, "core", ChartPoint::new(1, &[0.0, 0.01, 0.0]), TAU).unwrap();
        assert!((orbit.period - TAU).abs() < 1e-8);
        assert!(orbit.residual <= 1e-8);
        let p = orbit.start().coords;
        assert!(p[1].hypot(p[2]) < 1e-8, "{p:?}");
    }
}
