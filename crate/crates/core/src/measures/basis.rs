//! Tensor-product test functions on the domain box.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::cohomology::Potential;
use crate::geometry::{DomainSpec, FaceKind};

#[derive(Debug, Clone, Serialize)]
struct AxisBasis {
    lo: f64,
    width: f64,
    periodic: bool,
}

/// Products `φ₀(q₀) φ₁(q₁) φ₂(q₂)` with `2F + 1` one-dimensional modes per axis.
///
/// Periodic axes use `1, cos(2πjx), sin(2πjx)`, the non-periodic axis `cos(mπξ)`. A mode
/// that depends on an axis collapsing at a face is multiplied by the distance to that
/// face, so every test function is well defined on the manifold.
#[derive(Debug, Clone, Serialize)]
pub struct TestBasis {
    pub frequency: usize,
    axes: Vec<AxisBasis>,
    /// `(collapsing axis, radial axis, upper)`.
    collapse: Option<(usize, usize, bool)>,
}

impl TestBasis {
    pub fn new(d: &DomainSpec, frequency: usize) -> Self {
        let axes = d
            .axes
            .iter()
            .map(|a| AxisBasis { lo: a.lo, width: a.width(), periodic: a.periodic })
            .collect();
        let collapse = d.faces.iter().find_map(|f| match f.kind {
            FaceKind::Collapsed { axis } => Some((axis, f.axis, f.upper)),
            _ => None,
        });
        Self { frequency, axes, collapse }
    }

    pub fn modes_per_axis(&self) -> usize {
        2 * self.frequency + 1
    }

    pub fn len(&self) -> usize {
        self.modes_per_axis().pow(3)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Mode indices `(m₀, m₁, m₂)` of function `k`.
    pub fn modes(&self, k: usize) -> [usize; 3] {
        let n = self.modes_per_axis();
        [k / (n * n), (k / n) % n, k % n]
    }

    fn mode_1d(&self, axis: usize, m: usize, x: f64) -> (f64, f64) {
        let a = &self.axes[axis];
        let u = (x - a.lo) / a.width;
        if m == 0 {
            return (1.0, 0.0);
        }
        if a.periodic {
            let j = ((m + 1) / 2) as f64;
            let w = TAU * j;
            let (s, c) = (w * u).sin_cos();
            if m % 2 == 1 {
                (c, -w * s / a.width)
            } else {
                (s, w * c / a.width)
            }
        } else {
            let w = PI * m as f64;
            let (s, c) = (w * u).sin_cos();
            (c, -w * s / a.width)
        }
    }

    /// Values and gradients of every basis function at `q`.
    pub fn eval_all(&self, q: &[f64; 3]) -> Vec<(f64, [f64; 3])> {
        let n = self.modes_per_axis();
        let table: Vec<Vec<(f64, f64)>> =
            (0..3).map(|axis| (0..n).map(|m| self.mode_1d(axis, m, q[axis])).collect()).collect();
        let factor = self.collapse.map(|(_, radial, upper)| {
            let a = &self.axes[radial];
            let xi = (q[radial] - a.lo) / a.width;
            if upper {
                (1.0 - xi, -1.0 / a.width)
            } else {
                (xi, 1.0 / a.width)
            }
        });
        let mut out = Vec::with_capacity(self.len());
        for k in 0..self.len() {
            let m = self.modes(k);
            let v = [table[0][m[0]], table[1][m[1]], table[2][m[2]]];
            let mut value = v[0].0 * v[1].0 * v[2].0;
            let mut grad = [v[0].1 * v[1].0 * v[2].0, v[0].0 * v[1].1 * v[2].0, v[0].0 * v[1].0 * v[2].1];
            if let (Some((axis, radial, _)), Some((f, df))) = (self.collapse, factor) {
                if m[axis] != 0 {
                    for g in &mut grad {
                        *g *= f;
                    }
                    grad[radial] += df * value;
                    value *= f;
                }
            }
            out.push((value, grad));
        }
        out
    }
}

/// `g = Σ a_k g_k` for a test basis.
#[derive(Debug, Clone, Serialize)]
pub struct TestPotential {
    pub basis: TestBasis,
    pub coeffs: Vec<f64>,
}

impl TestPotential {
    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|a| *a == 0.0)
    }

    pub fn value_and_gradient(&self, q: &[f64; 3]) -> (f64, [f64; 3]) {
        if self.is_zero() {
            return (0.0, [0.0; 3]);
        }
        let mut v = 0.0;
        let mut g = [0.0; 3];
        for ((val, grad), a) in self.basis.eval_all(q).into_iter().zip(&self.coeffs) {
            if *a != 0.0 {
                v += a * val;
                for k in 0..3 {
                    g[k] += a * grad[k];
                }
            }
        }
        (v, g)
    }
}

impl Potential for TestPotential {
    fn value(&self, q: &[f64; 3]) -> f64 {
        self.value_and_gradient(q).0
    }

    fn gradient(&self, q: &[f64; 3]) -> [f64; 3] {
        self.value_and_gradient(q).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FlowScenario;

    #[test]
    fn gradients_match_finite_differences() {
        for s in [FlowScenario::t3_linear([1.0, 2.0, 3.0]), FlowScenario::hopf(), FlowScenario::geodesic()] {
            let b = TestBasis::new(s.domain(), 1);
            assert_eq!(b.len(), 27);
            let q = [0.31, 0.47, 0.83];
            let base = b.eval_all(&q);
            for axis in 0..3 {
                let h = 1e-6;
                let mut qp = q;
                let mut qm = q;
                qp[axis] += h;
                qm[axis] -= h;
                let (p, m) = (b.eval_all(&qp), b.eval_all(&qm));
                for k in 0..b.len() {
                    let fd = (p[k].0 - m[k].0) / (2.0 * h);
                    assert!((fd - base[k].1[axis]).abs() < 1e-7, "k={k} axis={axis}");
                }
            }
        }
    }

    #[test]
    fn collapsed_modes_vanish_on_the_collapsed_face() {
        let s = FlowScenario::hopf();
        let b = TestBasis::new(s.domain(), 1);
        let v1 = b.eval_all(&[0.3, 1.0, 2.0]);
        let v2 = b.eval_all(&[1.7, 1.0, 2.0]);
        for k in 0..b.len() {
            assert!((v1[k].0 - v2[k].0).abs() < 1e-14);
        }
    }
}
