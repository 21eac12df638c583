//! Periodic cubic B-spline interpolation on uniform grids.

/// Coefficients `c` with `(c_{j−1} + 4 c_j + c_{j+1}) / 6 = f_j` (cyclic).
pub fn interpolation_coeffs(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut c = f.to_vec();
    if n < 3 {
        return c;
    }
    // Jacobi sweeps contract by 1/2; 64 sweeps reach machine precision
    let mut next = vec![0.0; n];
    for _ in 0..64 {
        for j in 0..n {
            let l = c[(j + n - 1) % n];
            let r = c[(j + 1) % n];
            next[j] = 1.5 * (f[j] - (l + r) / 6.0);
        }
        std::mem::swap(&mut c, &mut next);
    }
    c
}

/// Cubic B-spline weights for `c_{i−1}, c_i, c_{i+1}, c_{i+2}` at fractional offset `s`.
fn weights(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    let u = 1.0 - s;
    [u * u * u / 6.0, (3.0 * s3 - 6.0 * s2 + 4.0) / 6.0, (-3.0 * s3 + 3.0 * s2 + 3.0 * s + 1.0) / 6.0, s3 / 6.0]
}

fn weights_deriv(s: f64) -> [f64; 4] {
    let u = 1.0 - s;
    [-0.5 * u * u, (9.0 * s * s - 12.0 * s) / 6.0, (-9.0 * s * s + 6.0 * s + 3.0) / 6.0, 0.5 * s * s]
}

fn locate(x: f64, period: f64, n: usize) -> (usize, f64) {
    let u = (x / period).rem_euclid(1.0) * n as f64;
    let i = (u.floor() as usize).min(n - 1);
    (i, u - i as f64)
}

#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    period: f64,
    coeffs: Vec<f64>,
}

impl PeriodicSpline {
    pub fn new(values: &[f64], period: f64) -> Self {
        Self { period, coeffs: interpolation_coeffs(values) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.coeffs.len();
        let (i, s) = locate(x, self.period, n);
        let w = weights(s);
        (0..4).map(|k| w[k] * self.coeffs[(i + n + k - 1) % n]).sum()
    }
}

/// Tensor-product periodic spline on `[0, P₁) × [0, P₂)`, values stored row-major in `(i, j)`.
#[derive(Debug, Clone)]
pub struct PeriodicSpline2 {
    periods: [f64; 2],
    n: [usize; 2],
    coeffs: Vec<f64>,
}

impl PeriodicSpline2 {
    pub fn new(values: &[f64], n: [usize; 2], periods: [f64; 2]) -> Self {
        assert_eq!(values.len(), n[0] * n[1]);
        let mut c = values.to_vec();
        for i in 0..n[0] {
            let row = interpolation_coeffs(&c[i * n[1]..(i + 1) * n[1]]);
            c[i * n[1]..(i + 1) * n[1]].copy_from_slice(&row);
        }
        let mut col = vec![0.0; n[0]];
        for j in 0..n[1] {
            for i in 0..n[0] {
                col[i] = c[i * n[1] + j];
            }
            let cc = interpolation_coeffs(&col);
            for i in 0..n[0] {
                c[i * n[1] + j] = cc[i];
            }
        }
        Self { periods, n, coeffs: c }
    }

    fn combine(&self, x: f64, y: f64, wx: fn(f64) -> [f64; 4], wy: fn(f64) -> [f64; 4]) -> f64 {
        let [n0, n1] = self.n;
        let (i, s) = locate(x, self.periods[0], n0);
        let (j, u) = locate(y, self.periods[1], n1);
        let (a, b) = (wx(s), wy(u));
        let mut acc = 0.0;
        for (p, ap) in a.iter().enumerate() {
            let row = (i + n0 + p - 1) % n0;
            let mut inner = 0.0;
            for (q, bq) in b.iter().enumerate() {
                inner += bq * self.coeffs[row * n1 + (j + n1 + q - 1) % n1];
            }
            acc += ap * inner;
        }
        acc
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.combine(x, y, weights, weights)
    }

    /// `∂/∂y`.
    pub fn eval_dy(&self, x: f64, y: f64) -> f64 {
        self.combine(x, y, weights, weights_deriv) * self.n[1] as f64 / self.periods[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn reproduces_nodes_and_smooth_functions() {
        let n = 128;
        let f: Vec<f64> = (0..n).map(|j| (TAU * j as f64 / n as f64).cos()).collect();
        let s = PeriodicSpline::new(&f, TAU);
        for (j, v) in f.iter().enumerate() {
            assert!((s.eval(TAU * j as f64 / n as f64) - v).abs() < 1e-14);
        }
        for k in 0..100 {
            let x = 0.0731 * k as f64;
            assert!((s.eval(x) - x.cos()).abs() < 1e-7);
        }
    }

    #[test]
    fn tensor_spline_derivative() {
        let (n0, n1) = (32, 256);
        let f = |x: f64, y: f64| x.sin() + (2.0 * y).cos();
        let mut v = Vec::new();
        for i in 0..n0 {
            for j in 0..n1 {
                v.push(f(TAU * i as f64 / n0 as f64, TAU * j as f64 / n1 as f64));
            }
        }
        let s = PeriodicSpline2::new(&v, [n0, n1], [TAU, TAU]);
        assert!((s.eval(1.0, 2.0) - f(1.0, 2.0)).abs() < 1e-4);
        assert!((s.eval_dy(1.0, 2.0) + 2.0 * 4.0f64.sin()).abs() < 1e-5);
    }
}
