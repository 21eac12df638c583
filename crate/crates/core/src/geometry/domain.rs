//! Box coordinates `(q₀, q₁, q₂)` on the blown-up domain `D_L`.
//!
//! Every scenario exposes its blown-up domain as a single box, periodic in some axes.
//! Faces of the box are either boundary tori of blown-up link components, outer
//! invariant faces, or faces on which one periodic axis collapses to a point.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Axis {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn periodic(name: &'static str, period: f64) -> Self {
        Self { name, lo: 0.0, hi: period, periodic: true }
    }

    pub fn interval(name: &'static str, lo: f64, hi: f64) -> Self {
        Self { name, lo, hi, periodic: false }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Affine map from domain coordinates to polar tube coordinates `(t, r, θ)` near a link face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CollarMap {
    pub matrix: [[f64; 3]; 3],
    pub offset: [f64; 3],
}

impl CollarMap {
    pub fn new(matrix: [[f64; 3]; 3], offset: [f64; 3]) -> Self {
        Self { matrix, offset }
    }

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3])
    }

    /// Tube coordinates `(t, r, θ)` (angles unwrapped).
    pub fn apply(&self, q: &[f64; 3]) -> [f64; 3] {
        let mut out = self.offset;
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..3 {
                *o += self.matrix[i][j] * q[j];
            }
        }
        out
    }

    /// Pushes a domain vector to tube coordinates.
    pub fn apply_linear(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            for j in 0..3 {
                *o += self.matrix[i][j] * v[j];
            }
        }
        out
    }

    /// Pulls a tube covector `(A, B, C)` back to domain coordinates.
    pub fn pull_covector(&self, w: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (j, o) in out.iter_mut().enumerate() {
            for i in 0..3 {
                *o += w[i] * self.matrix[i][j];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FaceKind {
    /// Boundary torus of link component `component`.
    Link { component: usize, collar: CollarMap },
    /// Invariant or outflow boundary that is not part of the link.
    Outer,
    /// The periodic axis `axis` degenerates to a point on this face.
    Collapsed { axis: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Face {
    pub axis: usize,
    pub upper: bool,
    pub kind: FaceKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct DomainSpec {
    pub axes: [Axis; 3],
    pub faces: Vec<Face>,
}

impl DomainSpec {
    pub fn new(axes: [Axis; 3], faces: Vec<Face>) -> Self {
        Self { axes, faces }
    }

    pub fn face(&self, axis: usize, upper: bool) -> Option<&Face> {
        self.faces.iter().find(|f| f.axis == axis && f.upper == upper)
    }

    /// The non-periodic axis carrying faces, if any.
    pub fn radial_axis(&self) -> Option<usize> {
        self.axes.iter().position(|a| !a.periodic)
    }

    pub fn link_faces(&self) -> impl Iterator<Item = (usize, &Face, &CollarMap)> {
        self.faces.iter().filter_map(|f| match &f.kind {
            FaceKind::Link { component, collar } => Some((*component, f, collar)),
            _ => None,
        })
    }

    /// Axes collapsing at the given face.
    pub fn collapsed_axis(&self, axis: usize, upper: bool) -> Option<usize> {
        match self.face(axis, upper)?.kind {
            FaceKind::Collapsed { axis } => Some(axis),
            _ => None,
        }
    }

    /// Distance of `q` to the nearest link face, in units of the radial axis width.
    pub fn link_distance(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        for (_, f, _) in self.link_faces() {
            let a = &self.axes[f.axis];
            let d = if f.upper { a.hi - q[f.axis] } else { q[f.axis] - a.lo };
            best = best.min(d / a.width());
        }
        best
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::width).product()
    }
}
