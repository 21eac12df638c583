use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

/// Largest ambient dimension used by any scenario (unit tangent bundle of S² in ℝ⁶).
pub const MAX_DIM: usize = 6;

/// Fixed-capacity coordinate vector. Chart coordinates live in ℝ³, ℝ⁴ or ℝ⁶
/// depending on the scenario, so the length is carried at runtime.
#[derive(Clone, Copy, PartialEq)]
pub struct State {
    len: usize,
    data: [f64; MAX_DIM],
}

impl State {
    pub fn zeros(len: usize) -> Self {
        assert!(len <= MAX_DIM, "state dimension {len} exceeds {MAX_DIM}");
        Self { len, data: [0.0; MAX_DIM] }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = Self::zeros(values.len());
        s.data[..values.len()].copy_from_slice(values);
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.len]
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data[..self.len]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `self + h * dir`
    pub fn axpy(&self, h: f64, dir: &Self) -> Self {
        let mut out = *self;
        for i in 0..self.len {
            out.data[i] += h * dir.data[i];
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|v| v.is_finite())
    }
}

impl std::fmt::Debug for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.as_mut_slice()[i]
    }
}

impl Add for State {
    type Output = State;
    fn add(mut self, rhs: State) -> State {
        debug_assert_eq!(self.len, rhs.len);
        for i in 0..self.len {
            self.data[i] += rhs.data[i];
        }
        self
    }
}

impl AddAssign for State {
    fn add_assign(&mut self, rhs: State) {
        for i in 0..self.len {
            self.data[i] += rhs.data[i];
        }
    }
}

impl Sub for State {
    type Output = State;
    fn sub(mut self, rhs: State) -> State {
        debug_assert_eq!(self.len, rhs.len);
        for i in 0..self.len {
            self.data[i] -= rhs.data[i];
        }
        self
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(mut self, rhs: f64) -> State {
        for i in 0..self.len {
            self.data[i] *= rhs;
        }
        self
    }
}

impl Neg for State {
    type Output = State;
    fn neg(self) -> State {
        self * -1.0
    }
}

/// Wraps `x` into `[0, period)`.
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Wraps a difference into `[-period/2, period/2)`.
pub fn wrap_signed(x: f64, period: f64) -> f64 {
    let half = 0.5 * period;
    (x + half).rem_euclid(period) - half
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_respects_length() {
        let a = State::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        let b = State::from_slice(&[0.5, 0.5, 0.5, 0.5]);
        let c = a - b * 2.0;
        assert_eq!(c.as_slice(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(c.len(), 4);
        assert!((a.norm() - 30f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wrapping() {
        assert!((wrap(-0.25, 1.0) - 0.75).abs() < 1e-15);
        assert!((wrap_signed(0.9, 1.0) + 0.1).abs() < 1e-15);
        assert!((wrap_signed(-0.6, 1.0) - 0.4).abs() < 1e-15);
    }
}
