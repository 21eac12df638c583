use serde::Serialize;

use super::{assemble_lp, certify_positivity, Certificate, OccupationGrid, OccupationLp, Verdict, DELTA_SLACK};
use crate::boundary::{rho_y, rotation_number, BoundaryTorusField, RotationEstimate, B_GRID};
use crate::cohomology::{nice_representative, ClosedForm, DualClass};
use crate::error::Result;
use crate::geometry::FlowScenario;
use crate::orbit::{
    classify_orbit, monodromy_multipliers, refine_periodic_orbit, transverse_block, OrbitClass, PeriodicOrbit,
};

/// Numeric settings for [`check_condition_iii`].
#[derive(Debug, Clone, Serialize)]
pub struct ConditionSettings {
    pub grid: usize,
    pub frequency: usize,
    pub delta_slack: f64,
    /// Rotation numbers run for up to this many periods.
    pub horizon_periods: u64,
    pub rotation_seeds: usize,
    pub b_grid: usize,
    pub multiplier_tol: f64,
}

impl Default for ConditionSettings {
    fn default() -> Self {
        Self {
            grid: 8,
            frequency: 1,
            delta_slack: DELTA_SLACK,
            horizon_periods: 1 << 14,
            rotation_seeds: 8,
            b_grid: B_GRID,
            multiplier_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub orbit_id: String,
    /// Refined period (seconds).
    pub period: f64,
    pub closing_residual: f64,
    pub newton_iterations: usize,
    pub rotation: RotationEstimate,
    /// `(p, q)` of the class in the aligned tube.
    pub p: f64,
    pub q: f64,
    /// `ρ^y = (T/2π)(p + q ρ_θ)` (dimensionless).
    pub rho_y: f64,
    pub rho_y_error: f64,
    /// Floquet multipliers as `[re, im]`.
    pub multipliers: [[f64; 2]; 2],
    pub orbit_class: OrbitClass,
    pub condition_a: bool,
    pub annotation: Option<String>,
    #[serde(skip)]
    pub orbit: Option<PeriodicOrbit>,
    #[serde(skip)]
    pub boundary_field: Option<BoundaryTorusField>,
}

/// Refines a link component, computes its boundary field, rotation number and multipliers.
pub fn analyze_component(
    s: &FlowScenario,
    component: usize,
    class: &DualClass,
    settings: &ConditionSettings,
) -> Result<ComponentReport> {
    let c = &s.link()[component];
    let orbit = refine_periodic_orbit(s, &c.id, c.seed, c.period_guess)?;
    let lin = transverse_block(s, &orbit, component)?;
    let b = BoundaryTorusField::from_linearization(&lin, settings.b_grid, settings.b_grid)?;
    let n = settings.rotation_seeds.max(1);
    let seeds: Vec<(f64, f64)> =
        (0..n).map(|k| (orbit.period * k as f64 / n as f64, std::f64::consts::TAU * k as f64 / n as f64 + 0.1)).collect();
    let rotation = rotation_number(&b, &seeds, settings.horizon_periods)?;
    let data = class.boundary[component];
    let rho = rho_y(rotation.rho_theta, orbit.period, data.p, data.q);
    let rho_err = orbit.period / std::f64::consts::TAU * data.q.abs() * rotation.error_bound;
    let mult = monodromy_multipliers(&lin);
    let orbit_class = classify_orbit(&mult, settings.multiplier_tol);
    let condition_a = rho > rho_err;
    let annotation = if condition_a {
        None
    } else if rho.abs() <= rho_err.max(1e-9) && orbit_class == OrbitClass::Hyperbolic {
        Some("generic obstruction: ρ^y = 0 at a hyperbolic orbit".to_string())
    } else if rho < 0.0 {
        Some("ρ^y is negative".to_string())
    } else {
        Some("ρ^y is not resolved away from 0".to_string())
    };
    Ok(ComponentReport {
        orbit_id: orbit.orbit_id.clone(),
        period: orbit.period,
        closing_residual: orbit.residual,
        newton_iterations: orbit.newton_iterations,
        rotation,
        p: data.p,
        q: data.q,
        rho_y: rho,
        rho_y_error: rho_err,
        multipliers: [[mult[0].re, mult[0].im], [mult[1].re, mult[1].im]],
        orbit_class,
        condition_a,
        annotation,
        orbit: Some(orbit),
        boundary_field: Some(b),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionVerdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub components: Vec<ComponentReport>,
    pub certificate: Certificate,
    pub verdict: ConditionVerdict,
    /// Smallest `ρ^y − error` over the components (condition a).
    pub margin_a: Option<f64>,
    /// `ε*` of the certificate (condition b).
    pub margin_b: f64,
    #[serde(skip)]
    pub lp: Option<OccupationLp>,
    #[serde(skip)]
    pub beta: Option<ClosedForm>,
}

/// Condition (a) for every link component and condition (b) by LP certification.
pub fn check_condition_iii(s: &FlowScenario, class: &DualClass, settings: &ConditionSettings) -> Result<ConditionReport> {
    let components = (0..s.link().len())
        .map(|k| analyze_component(s, k, class, settings))
        .collect::<Result<Vec<_>>>()?;
    let beta = nice_representative(class, s)?;
    let grid = OccupationGrid::new(s, settings.grid, settings.frequency)?;
    let lp = assemble_lp(&grid, &beta, settings.delta_slack)?;
    let certificate = certify_positivity(s, &lp);
    let all_a = components.iter().all(|c| c.condition_a);
    let verdict = match (all_a, certificate.verdict) {
        (true, Verdict::Certified) => ConditionVerdict::Holds,
        (false, _) | (_, Verdict::Refuted) => ConditionVerdict::Fails,
        _ => ConditionVerdict::Inconclusive,
    };
    let margin_a = components.iter().map(|c| c.rho_y - c.rho_y_error).reduce(f64::min);
    Ok(ConditionReport {
        components,
        margin_b: certificate.epsilon_star,
        certificate,
        verdict,
        margin_a,
        lp: Some(lp),
        beta: Some(beta),
    })
}
