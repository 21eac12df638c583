use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::domain::{Axis, CollarMap, DomainSpec, Face, FaceKind};
use super::state::{wrap, State, MAX_DIM};
use super::tubular::{TubeKind, TubularChart, GEODESIC_TUBE_INCLINATION};
use crate::error::{Error, Result};

/// Index of a chart inside a scenario atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChartId(pub usize);

/// A point expressed in one chart of the atlas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartPoint {
    pub chart: ChartId,
    pub coords: State,
}

impl ChartPoint {
    pub fn new(chart: usize, coords: &[f64]) -> Self {
        Self { chart: ChartId(chart), coords: State::from_slice(coords) }
    }
}

/// Open coordinate box with optional periodic coordinates.
#[derive(Debug, Clone)]
pub struct Chart {
    pub id: ChartId,
    pub name: &'static str,
    pub lo: State,
    pub hi: State,
    pub periods: [Option<f64>; MAX_DIM],
}

/// Fraction of a chart's width at which a trajectory is handed to another chart.
pub const TRANSITION_MARGIN: f64 = 0.05;

impl Chart {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &State) -> bool {
        (0..self.dim()).all(|i| self.periods[i].is_some() || (x[i] > self.lo[i] && x[i] < self.hi[i]))
    }

    /// Inside the chart and away from its non-periodic walls by the transition margin.
    pub fn contains_safely(&self, x: &State) -> bool {
        (0..self.dim()).all(|i| {
            if self.periods[i].is_some() {
                return true;
            }
            let margin = TRANSITION_MARGIN * (self.hi[i] - self.lo[i]);
            x[i] > self.lo[i] + margin && x[i] < self.hi[i] - margin
        })
    }

    pub fn wrap(&self, mut x: State) -> State {
        for i in 0..self.dim() {
            if let Some(p) = self.periods[i] {
                x[i] = self.lo[i] + wrap(x[i] - self.lo[i], p);
            }
        }
        x
    }

    /// Coordinate difference `b - a` with periodic coordinates taken to the nearest image.
    pub fn delta(&self, a: &State, b: &State) -> State {
        let mut d = *b - *a;
        for i in 0..self.dim() {
            if let Some(p) = self.periods[i] {
                d[i] = super::state::wrap_signed(d[i], p);
            }
        }
        d
    }
}

/// Angular-speed profile `f(r) = Σ c_k r^{2k}` of the solid-torus model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub coeffs: Vec<f64>,
}

impl RadialProfile {
    pub fn constant(value: f64) -> Self {
        Self { coeffs: vec![value] }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r2 = r * r;
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * r2 + c)
    }

    /// `f'(r) / r`, smooth at the core.
    pub fn derivative_over_r(&self, r: f64) -> f64 {
        let r2 = r * r;
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * r2 + 2.0 * k as f64 * c)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        r * self.derivative_over_r(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioKind {
    /// Constant field ω on the flat 3-torus ℝ³/ℤ³.
    T3Linear { omega: [f64; 3] },
    /// `∂_t + f(r) ∂_θ` on ℝ/Tℤ × 𝔻 with the core as the link.
    SolidTorusModel { profile: RadialProfile, period: f64 },
    /// `z ↦ e^{it} z` on the unit sphere of ℂ², link = the fiber `{z₂ = 0}`.
    HopfS3,
    /// Geodesic flow of the round unit sphere, link = the equator traversed both ways.
    GeodesicS2,
    /// `∂_t + A (x, y) + Q(x, y)` on ℝ/Tℤ × 𝔻 with a constant block `A` and a quadratic
    /// part `Q_k = q_k0 x² + q_k1 xy + q_k2 y²`.
    LinearBlockTube { block: [[f64; 2]; 2], quadratic: [[f64; 3]; 2], period: f64 },
}

/// A declared periodic orbit of the link together with its tubular chart.
#[derive(Debug, Clone)]
pub struct LinkComponent {
    pub id: String,
    pub seed: ChartPoint,
    pub period_guess: f64,
    pub tube: TubularChart,
}

/// A flow on a model 3-manifold, its atlas, declared link and blown-up domain.
#[derive(Debug, Clone)]
pub struct FlowScenario {
    kind: ScenarioKind,
    atlas: Vec<Chart>,
    link: Vec<LinkComponent>,
    domain: DomainSpec,
}

fn chart(id: usize, name: &'static str, lo: &[f64], hi: &[f64], periods: &[Option<f64>]) -> Chart {
    let mut p = [None; MAX_DIM];
    p[..periods.len()].copy_from_slice(periods);
    Chart { id: ChartId(id), name, lo: State::from_slice(lo), hi: State::from_slice(hi), periods: p }
}

const SOLID_POLAR: usize = 0;
const SOLID_CORE: usize = 1;

impl FlowScenario {
    pub fn t3_linear(omega: [f64; 3]) -> Self {
        let atlas = vec![chart(0, "torus", &[0.0; 3], &[1.0; 3], &[Some(1.0); 3])];
        let domain = DomainSpec::new(
            [Axis::periodic("x1", 1.0), Axis::periodic("x2", 1.0), Axis::periodic("x3", 1.0)],
            vec![],
        );
        Self { kind: ScenarioKind::T3Linear { omega }, atlas, link: vec![], domain }
    }

    /// T³ with the closed orbit through `(0, c₂, c₃)` declared as a link component.
    /// Requires ω = (ω₁, 0, 0).
    pub fn t3_axis_orbit(omega1: f64, center: [f64; 2]) -> Self {
        let mut s = Self::t3_linear([omega1, 0.0, 0.0]);
        let period = 1.0 / omega1.abs();
        s.link.push(LinkComponent {
            id: "axis".into(),
            seed: ChartPoint::new(0, &[0.0, center[0], center[1]]),
            period_guess: period,
            tube: TubularChart::new("axis", period, 1, TubeKind::TorusAxis { omega1, center, radius: 0.25 }),
        });
        s
    }

    pub fn solid_torus(profile: RadialProfile, period: f64) -> Self {
        let atlas = vec![
            chart(SOLID_POLAR, "polar", &[0.0, 0.2, 0.0], &[period, 1.05, TAU], &[Some(period), None, Some(TAU)]),
            chart(SOLID_CORE, "core", &[0.0, -0.3, -0.3], &[period, 0.3, 0.3], &[Some(period), None, None]),
        ];
        let link = vec![LinkComponent {
            id: "core".into(),
            seed: ChartPoint::new(SOLID_CORE, &[0.0, 0.0, 0.0]),
            period_guess: period,
            tube: TubularChart::new("core", period, 1, TubeKind::SolidCore),
        }];
        let domain = DomainSpec::new(
            [Axis::periodic("t", period), Axis::interval("r", 0.0, 1.0), Axis::periodic("theta", TAU)],
            vec![
                Face { axis: 1, upper: false, kind: FaceKind::Link { component: 0, collar: CollarMap::identity() } },
                Face { axis: 1, upper: true, kind: FaceKind::Outer },
            ],
        );
        Self { kind: ScenarioKind::SolidTorusModel { profile, period }, atlas, link, domain }
    }

    pub fn linear_block(block: [[f64; 2]; 2], period: f64) -> Self {
        Self::linear_block_with_quadratic(block, [[0.0; 3]; 2], period)
    }

    pub fn linear_block_with_quadratic(block: [[f64; 2]; 2], quadratic: [[f64; 3]; 2], period: f64) -> Self {
        let atlas = vec![chart(0, "core", &[0.0, -1.05, -1.05], &[period, 1.05, 1.05], &[Some(period), None, None])];
        let link = vec![LinkComponent {
            id: "core".into(),
            seed: ChartPoint::new(0, &[0.0, 0.0, 0.0]),
            period_guess: period,
            tube: TubularChart::new("core", period, 1, TubeKind::LinearCore),
        }];
        let domain = DomainSpec::new(
            [Axis::periodic("t", period), Axis::interval("r", 0.0, 1.0), Axis::periodic("theta", TAU)],
            vec![
                Face { axis: 1, upper: false, kind: FaceKind::Link { component: 0, collar: CollarMap::identity() } },
                Face { axis: 1, upper: true, kind: FaceKind::Outer },
            ],
        );
        Self { kind: ScenarioKind::LinearBlockTube { block, quadratic, period }, atlas, link, domain }
    }

    pub fn hopf() -> Self {
        let atlas = vec![chart(0, "c2", &[-1.5; 4], &[1.5; 4], &[None; 4])];
        let link = vec![LinkComponent {
            id: "fiber".into(),
            seed: ChartPoint::new(0, &[1.0, 0.0, 0.0, 0.0]),
            period_guess: TAU,
            tube: TubularChart::new("fiber", TAU, 1, TubeKind::HopfFiber),
        }];
        let domain = DomainSpec::new(
            [Axis::periodic("t", TAU), Axis::interval("r", 0.0, 1.0), Axis::periodic("theta", TAU)],
            vec![
                Face { axis: 1, upper: false, kind: FaceKind::Link { component: 0, collar: CollarMap::identity() } },
                Face { axis: 1, upper: true, kind: FaceKind::Collapsed { axis: 0 } },
            ],
        );
        Self { kind: ScenarioKind::HopfS3, atlas, link, domain }
    }

    pub fn geodesic() -> Self {
        let atlas = vec![chart(0, "tangent", &[-1.5; 6], &[1.5; 6], &[None; 6])];
        let imax = GEODESIC_TUBE_INCLINATION;
        let link = vec![
            LinkComponent {
                id: "equator+".into(),
                seed: ChartPoint::new(0, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]),
                period_guess: TAU,
                tube: TubularChart::new("equator+", TAU, 1, TubeKind::GeodesicEquator { reversed: false }),
            },
            LinkComponent {
                id: "equator-".into(),
                seed: ChartPoint::new(0, &[1.0, 0.0, 0.0, 0.0, -1.0, 0.0]),
                period_guess: TAU,
                tube: TubularChart::new("equator-", TAU, 1, TubeKind::GeodesicEquator { reversed: true }),
            },
        ];
        // domain coordinates (u, ι, s): true longitude, inclination, argument of latitude
        let domain = DomainSpec::new(
            [Axis::periodic("u", TAU), Axis::interval("inclination", 0.0, PI), Axis::periodic("s", TAU)],
            vec![
                Face {
                    axis: 1,
                    upper: false,
                    kind: FaceKind::Link {
                        component: 0,
                        collar: CollarMap::new([[1.0, 0.0, 0.0], [0.0, 1.0 / imax, 0.0], [0.0, 0.0, 1.0]], [0.0; 3]),
                    },
                },
                Face {
                    axis: 1,
                    upper: true,
                    kind: FaceKind::Link {
                        component: 1,
                        collar: CollarMap::new(
                            [[-1.0, 0.0, 2.0], [0.0, -1.0 / imax, 0.0], [0.0, 0.0, 1.0]],
                            [0.0, PI / imax, -PI],
                        ),
                    },
                },
            ],
        );
        Self { kind: ScenarioKind::GeodesicS2, atlas, link, domain }
    }

    pub fn kind(&self) -> &ScenarioKind {
        &self.kind
    }

    pub fn atlas(&self) -> &[Chart] {
        &self.atlas
    }

    pub fn chart(&self, id: ChartId) -> &Chart {
        &self.atlas[id.0]
    }

    pub fn link(&self) -> &[LinkComponent] {
        &self.link
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    /// Replaces the tubular chart of a link component (e.g. with a reframed one).
    pub fn with_tube(mut self, component: usize, tube: TubularChart) -> Self {
        self.link[component].tube = tube;
        self
    }

    /// Characteristic time scale of the flow (used for horizons and cutoffs).
    pub fn characteristic_period(&self) -> f64 {
        match &self.kind {
            ScenarioKind::T3Linear { omega } => {
                let m = omega.iter().fold(0.0_f64, |a, w| a.max(w.abs()));
                1.0 / m.max(1e-12)
            }
            ScenarioKind::SolidTorusModel { period, .. } | ScenarioKind::LinearBlockTube { period, .. } => *period,
            ScenarioKind::HopfS3 | ScenarioKind::GeodesicS2 => TAU,
        }
    }

    fn check_domain(&self, p: &ChartPoint) -> Result<()> {
        let c = self
            .atlas
            .get(p.chart.0)
            .ok_or_else(|| Error::Domain(format!("unknown chart {:?}", p.chart)))?;
        if p.coords.len() != c.dim() {
            return Err(Error::Domain(format!(
                "chart '{}' expects {} coordinates, got {}",
                c.name,
                c.dim(),
                p.coords.len()
            )));
        }
        if !c.contains(&p.coords) {
            return Err(Error::Domain(format!("point {:?} outside chart '{}'", p.coords, c.name)));
        }
        Ok(())
    }

    /// The vector field at `p`, in the coordinates of `p`'s chart.
    pub fn eval_field(&self, p: &ChartPoint) -> Result<State> {
        self.check_domain(p)?;
        Ok(self.field(p.chart, &p.coords))
    }

    /// Field evaluation without domain checks (hot path of the integrator).
    pub fn field(&self, chart: ChartId, x: &State) -> State {
        match &self.kind {
            ScenarioKind::T3Linear { omega } => State::from_slice(omega),
            ScenarioKind::SolidTorusModel { profile, .. } => {
                if chart.0 == SOLID_POLAR {
                    State::from_slice(&[1.0, 0.0, profile.eval(x[1])])
                } else {
                    let f = profile.eval(x[1].hypot(x[2]));
                    State::from_slice(&[1.0, -f * x[2], f * x[1]])
                }
            }
            ScenarioKind::LinearBlockTube { block, quadratic: q, .. } => {
                let (a, b) = (x[1], x[2]);
                State::from_slice(&[
                    1.0,
                    block[0][0] * a + block[0][1] * b + q[0][0] * a * a + q[0][1] * a * b + q[0][2] * b * b,
                    block[1][0] * a + block[1][1] * b + q[1][0] * a * a + q[1][1] * a * b + q[1][2] * b * b,
                ])
            }
            ScenarioKind::HopfS3 => State::from_slice(&[-x[1], x[0], -x[3], x[2]]),
            ScenarioKind::GeodesicS2 => State::from_slice(&[x[3], x[4], x[5], -x[0], -x[1], -x[2]]),
        }
    }

    /// Analytic Jacobian of the field in the chart of `p`.
    pub fn eval_jacobian(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        self.check_domain(p)?;
        let x = &p.coords;
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        match &self.kind {
            ScenarioKind::T3Linear { .. } => {}
            ScenarioKind::SolidTorusModel { profile, .. } => {
                if p.chart.0 == SOLID_POLAR {
                    j[(2, 1)] = profile.derivative(x[1]);
                } else {
                    let r = x[1].hypot(x[2]);
                    let f = profile.eval(r);
                    let g = profile.derivative_over_r(r);
                    j[(1, 1)] = -g * x[1] * x[2];
                    j[(1, 2)] = -f - g * x[2] * x[2];
                    j[(2, 1)] = f + g * x[1] * x[1];
                    j[(2, 2)] = g * x[1] * x[2];
                }
            }
            ScenarioKind::LinearBlockTube { block, quadratic: q, .. } => {
                for k in 0..2 {
                    j[(1 + k, 1)] = block[k][0] + 2.0 * q[k][0] * x[1] + q[k][1] * x[2];
                    j[(1 + k, 2)] = block[k][1] + q[k][1] * x[1] + 2.0 * q[k][2] * x[2];
                }
            }
            ScenarioKind::HopfS3 => {
                j[(0, 1)] = -1.0;
                j[(1, 0)] = 1.0;
                j[(2, 3)] = -1.0;
                j[(3, 2)] = 1.0;
            }
            ScenarioKind::GeodesicS2 => {
                for i in 0..3 {
                    j[(i, 3 + i)] = 1.0;
                    j[(3 + i, i)] = -1.0;
                }
            }
        }
        Ok(j)
    }

    /// Central finite-difference Jacobian.
    pub fn jacobian_fd(&self, p: &ChartPoint) -> Result<DMatrix<f64>> {
        self.check_domain(p)?;
        let n = p.coords.len();
        let mut j = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = 1e-6 * (1.0 + p.coords[k].abs());
            let mut xp = p.coords;
            let mut xm = p.coords;
            xp[k] += h;
            xm[k] -= h;
            let d = (self.field(p.chart, &xp) - self.field(p.chart, &xm)) * (0.5 / h);
            for i in 0..n {
                j[(i, k)] = d[i];
            }
        }
        Ok(j)
    }

    /// Periodic wrap plus projection onto the constraint manifold (unit sphere, unit tangent bundle).
    pub fn project(&self, p: ChartPoint) -> ChartPoint {
        let mut x = self.chart(p.chart).wrap(p.coords);
        match self.kind {
            ScenarioKind::HopfS3 => {
                let n = x.norm();
                x = x * (1.0 / n);
            }
            ScenarioKind::GeodesicS2 => {
                let pos = State::from_slice(&x.as_slice()[..3]);
                let pos = pos * (1.0 / pos.norm());
                let vel = State::from_slice(&x.as_slice()[3..]);
                let vel = vel.axpy(-vel.dot(&pos), &pos);
                let vel = vel * (1.0 / vel.norm());
                x = State::from_slice(&[pos[0], pos[1], pos[2], vel[0], vel[1], vel[2]]);
            }
            _ => {}
        }
        ChartPoint { chart: p.chart, coords: x }
    }

    /// Gradients of the constraint functions defining the manifold inside the chart.
    pub fn constraint_gradients(&self, p: &ChartPoint) -> Vec<State> {
        let x = &p.coords;
        match self.kind {
            ScenarioKind::HopfS3 => vec![*x],
            ScenarioKind::GeodesicS2 => vec![
                State::from_slice(&[x[0], x[1], x[2], 0.0, 0.0, 0.0]),
                State::from_slice(&[0.0, 0.0, 0.0, x[3], x[4], x[5]]),
                State::from_slice(&[x[3], x[4], x[5], x[0], x[1], x[2]]),
            ],
            _ => vec![],
        }
    }

    /// Residual of the constraints (0 on the manifold).
    pub fn constraint_residual(&self, p: &ChartPoint) -> f64 {
        let x = &p.coords;
        match self.kind {
            ScenarioKind::HopfS3 => (x.norm() - 1.0).abs(),
            ScenarioKind::GeodesicS2 => {
                let xx = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                let vv = x[3] * x[3] + x[4] * x[4] + x[5] * x[5];
                let xv = x[0] * x[3] + x[1] * x[4] + x[2] * x[5];
                (xx.sqrt() - 1.0).abs().max((vv.sqrt() - 1.0).abs()).max(xv.abs())
            }
            _ => 0.0,
        }
    }

    /// A positively oriented tangent frame at `p` (defines the orientation of M).
    pub fn oriented_frame(&self, p: &ChartPoint) -> [State; 3] {
        let x = &p.coords;
        match self.kind {
            ScenarioKind::HopfS3 => [
                State::from_slice(&[-x[1], x[0], -x[3], x[2]]),
                State::from_slice(&[-x[2], x[3], x[0], -x[1]]),
                State::from_slice(&[-x[3], -x[2], x[1], x[0]]),
            ],
            ScenarioKind::GeodesicS2 => {
                let n = [x[1] * x[5] - x[2] * x[4], x[2] * x[3] - x[0] * x[5], x[0] * x[4] - x[1] * x[3]];
                [
                    State::from_slice(&[x[3], x[4], x[5], -x[0], -x[1], -x[2]]),
                    State::from_slice(&[0.0, 0.0, 0.0, n[0], n[1], n[2]]),
                    State::from_slice(&[n[0], n[1], n[2], 0.0, 0.0, 0.0]),
                ]
            }
            _ => {
                let mut e = [State::zeros(3), State::zeros(3), State::zeros(3)];
                for (i, v) in e.iter_mut().enumerate() {
                    v[i] = 1.0;
                }
                e
            }
        }
    }

    /// Expresses `p` in chart `target`.
    pub fn convert(&self, p: &ChartPoint, target: ChartId) -> Result<ChartPoint> {
        if p.chart == target {
            return Ok(*p);
        }
        let x = &p.coords;
        let coords = match (&self.kind, p.chart.0, target.0) {
            (ScenarioKind::SolidTorusModel { .. }, SOLID_POLAR, SOLID_CORE) => {
                State::from_slice(&[x[0], x[1] * x[2].cos(), x[1] * x[2].sin()])
            }
            (ScenarioKind::SolidTorusModel { .. }, SOLID_CORE, SOLID_POLAR) => {
                State::from_slice(&[x[0], x[1].hypot(x[2]), wrap(x[2].atan2(x[1]), TAU)])
            }
            _ => return Err(Error::Domain(format!("no overlap map {:?} -> {:?}", p.chart, target))),
        };
        let out = ChartPoint { chart: target, coords: self.chart(target).wrap(coords) };
        self.check_domain(&out)?;
        Ok(out)
    }

    /// If `p` sits inside the transition margin of its chart, hands it to a chart that
    /// contains it safely. Returns an error if `p` has left every chart.
    pub fn settle(&self, p: ChartPoint) -> Result<ChartPoint> {
        let c = self.chart(p.chart);
        if c.contains_safely(&p.coords) {
            return Ok(p);
        }
        for other in &self.atlas {
            if other.id == p.chart {
                continue;
            }
            if let Ok(q) = self.convert(&p, other.id) {
                if other.contains_safely(&q.coords) {
                    return Ok(q);
                }
            }
        }
        if c.contains(&p.coords) {
            Ok(p)
        } else {
            Err(Error::Domain(format!("point {:?} left the atlas (chart '{}')", p.coords, c.name)))
        }
    }

    /// Scenario-specific field written in blown-up domain coordinates (valid off the link faces).
    pub fn domain_field(&self, q: &[f64; 3]) -> [f64; 3] {
        match &self.kind {
            ScenarioKind::T3Linear { omega } => *omega,
            ScenarioKind::SolidTorusModel { profile, .. } => [1.0, 0.0, profile.eval(q[1])],
            ScenarioKind::LinearBlockTube { block, quadratic, .. } => {
                let (s, c) = q[2].sin_cos();
                let r = q[1];
                // transverse velocity at r e is r (A e) + r² Q(e)
                let mut v = [0.0; 2];
                for k in 0..2 {
                    let qe = quadratic[k][0] * c * c + quadratic[k][1] * c * s + quadratic[k][2] * s * s;
                    v[k] = block[k][0] * c + block[k][1] * s + r * qe;
                }
                [1.0, r * (c * v[0] + s * v[1]), -s * v[0] + c * v[1]]
            }
            ScenarioKind::HopfS3 | ScenarioKind::GeodesicS2 => [1.0, 0.0, 1.0],
        }
    }

    /// Maps blown-up domain coordinates to a manifold point (the link faces map onto the link).
    pub fn domain_to_manifold(&self, q: &[f64; 3]) -> ChartPoint {
        match &self.kind {
            ScenarioKind::T3Linear { .. } => ChartPoint::new(0, q),
            ScenarioKind::SolidTorusModel { .. } => {
                let p = ChartPoint::new(SOLID_CORE, &[q[0], q[1] * q[2].cos(), q[1] * q[2].sin()]);
                self.settle(p).unwrap_or(p)
            }
            ScenarioKind::LinearBlockTube { .. } => ChartPoint::new(0, &[q[0], q[1] * q[2].cos(), q[1] * q[2].sin()]),
            ScenarioKind::HopfS3 => {
                let rho1 = (1.0 - q[1] * q[1]).max(0.0).sqrt();
                ChartPoint::new(
                    0,
                    &[rho1 * q[0].cos(), rho1 * q[0].sin(), q[1] * q[2].cos(), q[1] * q[2].sin()],
                )
            }
            ScenarioKind::GeodesicS2 => {
                let (x, v) = super::tubular::geodesic_from_elements(q[0] - q[2], q[1], q[2]);
                ChartPoint::new(0, &[x[0], x[1], x[2], v[0], v[1], v[2]])
            }
        }
    }

    /// Blown-up domain coordinates of a manifold point off the link.
    pub fn manifold_to_domain(&self, p: &ChartPoint) -> [f64; 3] {
        let x = &p.coords;
        match &self.kind {
            ScenarioKind::T3Linear { .. } => [wrap(x[0], 1.0), wrap(x[1], 1.0), wrap(x[2], 1.0)],
            ScenarioKind::SolidTorusModel { .. } => {
                if p.chart.0 == SOLID_POLAR {
                    [x[0], x[1], x[2]]
                } else {
                    [x[0], x[1].hypot(x[2]), wrap(x[2].atan2(x[1]), TAU)]
                }
            }
            ScenarioKind::LinearBlockTube { .. } => [x[0], x[1].hypot(x[2]), wrap(x[2].atan2(x[1]), TAU)],
            ScenarioKind::HopfS3 => [
                wrap(x[1].atan2(x[0]), TAU),
                x[2].hypot(x[3]).min(1.0),
                wrap(x[3].atan2(x[2]), TAU),
            ],
            ScenarioKind::GeodesicS2 => super::tubular::geodesic_elements(x.as_slice()),
        }
    }
}

impl FlowScenario {
    /// Chart whose coordinates the tubular maps read (a global embedding for every scenario).
    pub fn canonical_chart(&self) -> ChartId {
        match self.kind {
            ScenarioKind::SolidTorusModel { .. } => ChartId(SOLID_CORE),
            _ => ChartId(0),
        }
    }

    /// Coordinates of `p` in the canonical chart, without box checks.
    pub fn to_canonical(&self, p: &ChartPoint) -> State {
        let x = &p.coords;
        match (&self.kind, p.chart.0) {
            (ScenarioKind::SolidTorusModel { .. }, SOLID_POLAR) => {
                State::from_slice(&[x[0], x[1] * x[2].cos(), x[1] * x[2].sin()])
            }
            _ => *x,
        }
    }

    /// Chart point for canonical coordinates, choosing a chart that contains it safely.
    pub fn from_canonical(&self, x: State) -> Result<ChartPoint> {
        let p = match self.kind {
            ScenarioKind::SolidTorusModel { .. } => {
                let r = x[1].hypot(x[2]);
                if r < 0.25 {
                    ChartPoint { chart: ChartId(SOLID_CORE), coords: self.atlas[SOLID_CORE].wrap(x) }
                } else {
                    ChartPoint::new(SOLID_POLAR, &[x[0], r, wrap(x[2].atan2(x[1]), TAU)])
                }
            }
            _ => self.project(ChartPoint { chart: ChartId(0), coords: x }),
        };
        let p = ChartPoint { chart: p.chart, coords: self.chart(p.chart).wrap(p.coords) };
        self.check_domain(&p)?;
        Ok(p)
    }

    /// Pushforward `Z(t, X, Y)` of the field to Cartesian tube coordinates of a link component.
    pub fn tube_field(&self, component: usize, q: [f64; 3]) -> [f64; 3] {
        let tube = &self.link[component].tube;
        let x = tube.from_cartesian(q);
        let f = self.field(self.canonical_chart(), &x);
        tube.pushforward(x.as_slice(), f.as_slice())
    }

    /// Determinant of `DΨ` applied to the oriented frame of M at the tube point `q`.
    pub fn tube_orientation(&self, component: usize, q: [f64; 3]) -> f64 {
        let tube = &self.link[component].tube;
        let x = tube.from_cartesian(q);
        let frame = self.oriented_frame(&ChartPoint { chart: self.canonical_chart(), coords: x });
        let cols: Vec<[f64; 3]> = frame.iter().map(|v| tube.pushforward(x.as_slice(), v.as_slice())).collect();
        nalgebra::Matrix3::from_fn(|i, j| cols[j][i]).determinant()
    }
}
