//! Model 3-manifolds, their flows and tubular coordinates around periodic orbits.

mod domain;
mod flow;
mod integrate;
mod scenario;
mod state;
mod tubular;

pub use domain::{Axis, CollarMap, DomainSpec, Face, FaceKind};
pub use flow::{flow, flow_rk4, integrate_trajectory, Step, Stepper, Trajectory};
pub use integrate::{dopri_step, hermite, rk4_solve, rk4_step, solve, AdaptiveOptions};
pub use scenario::{Chart, ChartId, ChartPoint, FlowScenario, LinkComponent, RadialProfile, ScenarioKind};
pub use state::{wrap, wrap_signed, State, MAX_DIM};
pub use tubular::{geodesic_elements, geodesic_from_elements, TubeKind, TubularChart, GEODESIC_TUBE_INCLINATION};
