//! Dense two-phase simplex for `min cᵀx` subject to `Ax = b`, `x ≥ 0`.
//!
//! Sized for occupation LPs (tens of rows, thousands of columns). Duals and the final
//! primal point are recomputed from the optimal basis by an LU solve, so the reported
//! solution does not carry the tableau's accumulated roundoff.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;
/// Degenerate pivots in a row before switching from Dantzig to Bland pricing.
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row duals `y` with `Aᵀy ≤ c` at optimality.
    pub y: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// Most negative reduced cost `min (c − Aᵀy)` (≥ −tolerance at optimality).
    pub min_reduced_cost: f64,
    /// `max |Ax − b|` and `max(−x)` of the recomputed basic solution.
    pub primal_residual: f64,
    pub iterations: usize,
}

impl LpSolution {
    /// `|primal − dual| / max(1, |primal|)`.
    pub fn relative_gap(&self) -> f64 {
        (self.primal_objective - self.dual_objective).abs() / self.primal_objective.abs().max(1.0)
    }
}

struct Tableau {
    m: usize,
    cols: usize,
    /// `(m + 1) × (cols + 1)` row-major; row `m` is the cost row, column `cols` the rhs.
    t: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.t[i * w + j] -= f * row[j];
                }
            }
        }
        self.basis[r] = c;
    }

    fn set_cost(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        for j in 0..w {
            self.t[self.m * w + j] = if j < self.cols { cost[j] } else { 0.0 };
        }
        for i in 0..self.m {
            let f = self.t[self.m * w + self.basis[i]];
            if f != 0.0 {
                for j in 0..w {
                    self.t[self.m * w + j] -= f * self.t[i * w + j];
                }
            }
        }
    }

    /// Runs simplex iterations on the current cost row over the allowed columns.
    fn optimize(&mut self, allowed: usize, max_iter: usize, iterations: &mut usize) -> LpStatus {
        let mut degenerate = 0usize;
        loop {
            if *iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_LIMIT;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..allowed {
                let d = self.at(self.m, j);
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else { return LpStatus::Optimal };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.at(i, self.cols) / a;
                    let better = match leave {
                        None => true,
                        Some((k, r)) => ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < self.basis[k]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else { return LpStatus::Unbounded };
            degenerate = if ratio.abs() < 1e-14 { degenerate + 1 } else { 0 };
            self.pivot(r, c);
            *iterations += 1;
        }
    }
}

/// Solves `min cᵀx, Ax = b, x ≥ 0` by the two-phase method with one artificial per row.
pub fn solve_standard(a: &DMatrix<f64>, b: &[f64], c: &[f64], max_iter: usize) -> LpSolution {
    let (m, n) = a.shape();
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = s * a[(i, j)];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = s * b[i];
    }
    let mut tab = Tableau { m, cols, t, basis: (n..n + m).collect() };
    let mut iterations = 0;

    let mut phase1 = vec![0.0; cols];
    for v in &mut phase1[n..] {
        *v = 1.0;
    }
    tab.set_cost(&phase1);
    let status = tab.optimize(n, max_iter, &mut iterations);
    let infeasibility: f64 = (0..m).filter(|&i| tab.basis[i] >= n).map(|i| tab.at(i, cols)).sum();
    if status == LpStatus::IterationLimit || infeasibility > PHASE1_TOL {
        let status = if status == LpStatus::IterationLimit { status } else { LpStatus::Infeasible };
        return failed(status, n, m, iterations);
    }
    // drive zero-level artificials out of the basis where possible
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.at(i, j).abs() > 1e-9 && !tab.basis.contains(&j)) {
                tab.pivot(i, j);
            }
        }
    }

    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat(0.0).take(m));
    tab.set_cost(&phase2);
    let status = tab.optimize(n, max_iter, &mut iterations);
    if status != LpStatus::Optimal {
        return failed(status, n, m, iterations);
    }
    recompute(a, b, c, &tab.basis, iterations)
}

fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> LpSolution {
    LpSolution {
        status,
        x: vec![0.0; n],
        y: vec![0.0; m],
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        min_reduced_cost: f64::NAN,
        primal_residual: f64::NAN,
        iterations,
    }
}

/// Primal point and duals from the basis (artificial columns are unit vectors).
fn recompute(a: &DMatrix<f64>, b: &[f64], c: &[f64], basis: &[usize], iterations: usize) -> LpSolution {
    let (m, n) = a.shape();
    let column = |j: usize| -> DVector<f64> {
        if j < n {
            a.column(j).into_owned()
        } else {
            let mut e = DVector::zeros(m);
            e[j - n] = 1.0;
            e
        }
    };
    let bmat = DMatrix::from_fn(m, m, |i, k| column(basis[k])[i]);
    let cb = DVector::from_fn(m, |k, _| if basis[k] < n { c[basis[k]] } else { 0.0 });
    let lu = bmat.clone().lu();
    let xb = lu.solve(&DVector::from_column_slice(b)).unwrap_or_else(|| DVector::zeros(m));
    let y = bmat.transpose().lu().solve(&cb).unwrap_or_else(|| DVector::zeros(m));

    let mut x = vec![0.0; n];
    for (k, &j) in basis.iter().enumerate() {
        if j < n {
            x[j] = xb[k];
        }
    }
    let ax = a * DVector::from_column_slice(&x);
    let mut residual = (0..m).map(|i| (ax[i] - b[i]).abs()).fold(0.0, f64::max);
    residual = x.iter().fold(residual, |r, v| r.max(-v));
    for v in &mut x {
        *v = v.max(0.0);
    }
    let reduced = DVector::from_column_slice(c) - a.transpose() * &y;
    let min_reduced_cost = reduced.iter().cloned().fold(f64::INFINITY, f64::min);
    let primal_objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    let dual_objective = b.iter().zip(y.iter()).map(|(bi, yi)| bi * yi).sum();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        y: y.iter().cloned().collect(),
        primal_objective,
        dual_objective,
        min_reduced_cost,
        primal_residual: residual,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lp_with_known_optimum() {
        // min −x₀ − 2x₁ s.t. x₀ + x₁ + s₀ = 4, x₀ + 3x₁ + s₁ = 6
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 0.0, 1.0, 3.0, 0.0, 1.0]);
        let sol = solve_standard(&a, &[4.0, 6.0], &[-1.0, -2.0, 0.0, 0.0], 100);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal_objective + 5.0).abs() < 1e-12);
        assert!((sol.x[0] - 3.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!(sol.relative_gap() < 1e-12);
        assert!(sol.min_reduced_cost > -1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(solve_standard(&a, &[1.0, 2.0], &[0.0, 0.0], 100).status, LpStatus::Infeasible);
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(solve_standard(&a, &[1.0], &[-1.0, 0.0], 100).status, LpStatus::Unbounded);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let sol = solve_standard(&a, &[1.0, 2.0], &[1.0, 3.0], 100);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-12);
        assert!(sol.relative_gap() < 1e-12);
    }
}
