use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{ClassConfig, NumericSettings, RunConfig, ScenarioConfig, SCHEMA_VERSION};
use crate::boundary::{BoundaryTorusField, RotationWindow};
use crate::error::Result;
use crate::measures::{check_condition_iii, Certificate, ConditionSettings, ConditionVerdict, OccupationLp, Verdict};
use crate::orbit::OrbitClass;
use crate::section::{build_projection, extract_leaf, verify_global_section, SectionLeaf, SectionReport, SectionSettings, SectionVerdict};

/// A number with units and, where one is known, an error bound.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Quantity {
    pub value: f64,
    pub units: &'static str,
    pub error_bound: Option<f64>,
}

impl Quantity {
    fn new(value: f64, units: &'static str, error_bound: Option<f64>) -> Self {
        Self { value, units, error_bound }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub name: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: &'static str,
    pub scenario: ScenarioConfig,
    pub class: ClassConfig,
    pub settings: NumericSettings,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitSummary {
    pub orbit_id: String,
    pub period: Quantity,
    pub closing_residual: f64,
    pub newton_iterations: usize,
    pub rho_theta: Quantity,
    pub rho_y: Quantity,
    pub multipliers: [[f64; 2]; 2],
    pub orbit_class: OrbitClass,
    pub condition_a: bool,
    pub annotation: Option<String>,
    pub rotation_windows: Vec<RotationWindow>,
    pub rotation_warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    CertifiedVerified,
    Refuted,
    Inconclusive,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::CertifiedVerified => 0,
            Outcome::Refuted => 2,
            Outcome::Inconclusive => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionSummary {
    pub verdict: ConditionVerdict,
    pub outcome: Outcome,
    pub exit_code: i32,
    /// Smallest `ρ^y − error` over the link (condition a).
    pub margin_a: Option<Quantity>,
    /// `ε*` of the certificate (condition b).
    pub margin_b: Quantity,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub condition_seconds: f64,
    pub section_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: Provenance,
    pub orbits: Vec<OrbitSummary>,
    pub condition_iii: ConditionSummary,
    pub certificate: Certificate,
    pub section: Option<SectionReport>,
    pub timing: Timing,
    #[serde(skip)]
    pub boundary_fields: Vec<BoundaryTorusField>,
    #[serde(skip)]
    pub leaf: Option<SectionLeaf>,
    #[serde(skip)]
    pub lp: Option<OccupationLp>,
}

impl RunReport {
    pub fn outcome(&self) -> Outcome {
        self.condition_iii.outcome
    }
}

/// Orbits, rotation numbers, LP certification and, when certified, section construction and
/// verification.
pub fn run_scenario(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let s = config.scenario();
    let class = config.class(&s)?;
    let st = &config.settings;
    let settings = ConditionSettings {
        grid: st.grid,
        frequency: st.frequency,
        delta_slack: st.delta_slack,
        horizon_periods: st.horizon_periods,
        rotation_seeds: st.rotation_seeds,
        b_grid: st.b_grid,
        multiplier_tol: st.multiplier_tol,
    };
    let mut condition = check_condition_iii(&s, &class, &settings)?;
    let condition_seconds = start.elapsed().as_secs_f64();

    let mut reasons = Vec::new();
    for c in condition.components.iter().filter(|c| !c.condition_a) {
        reasons.push(format!("{}: {}", c.orbit_id, c.annotation.clone().unwrap_or_default()));
    }
    match condition.certificate.verdict {
        Verdict::Refuted => reasons.push(format!(
            "invariant measure with pairing {:.6e} (invariance residual {:.3e})",
            condition.certificate.pairing, condition.certificate.invariance_residual
        )),
        Verdict::Inconclusive => reasons.push("LP certificate inconclusive".into()),
        Verdict::Certified => {}
    }

    let section_start = Instant::now();
    let mut section = None;
    let mut leaf = None;
    if condition.verdict == ConditionVerdict::Holds {
        let cert = &condition.certificate;
        let beta = condition.beta.take().expect("condition report carries its form");
        let lp = condition.lp.as_ref().expect("condition report carries its LP");
        let g = cert.potential(lp);
        let eta = if g.is_zero() { beta } else { beta.plus_exact(Arc::new(g)) };
        let d = s.domain();
        let base = [d.axes[0].lo, d.axes[1].lo, d.axes[2].lo];
        let sect = SectionSettings {
            grid: st.section_grid,
            level: st.level,
            return_samples: st.return_samples,
            cutoff: st.return_cutoff,
            seed: st.seed,
            tol: st.tol,
        };
        let built = build_projection(&s, &eta, base, sect.grid).and_then(|p| {
            let l = extract_leaf(&s, &p, sect.level.unwrap_or_else(|| p.regular_value()))?;
            let r = verify_global_section(&s, &class, &p, &l, cert.epsilon_star, &sect)?;
            Ok((l, r))
        });
        match built {
            Ok((l, r)) => {
                reasons.extend(r.failures.iter().map(|f| format!("section: {f}")));
                leaf = Some(l);
                section = Some(r);
            }
            Err(e) => reasons.push(format!("section: {e}")),
        }
    }
    let section_seconds = section_start.elapsed().as_secs_f64();

    let outcome = match condition.verdict {
        ConditionVerdict::Fails => Outcome::Refuted,
        ConditionVerdict::Holds if section.as_ref().is_some_and(|r| r.verdict == SectionVerdict::Pass) => {
            Outcome::CertifiedVerified
        }
        _ => Outcome::Inconclusive,
    };

    let orbits = condition
        .components
        .iter()
        .map(|c| OrbitSummary {
            orbit_id: c.orbit_id.clone(),
            period: Quantity::new(c.period, "s", Some(c.closing_residual)),
            closing_residual: c.closing_residual,
            newton_iterations: c.newton_iterations,
            rho_theta: Quantity::new(c.rotation.rho_theta, "rad/s", Some(c.rotation.error_bound)),
            rho_y: Quantity::new(c.rho_y, "1", Some(c.rho_y_error)),
            multipliers: c.multipliers,
            orbit_class: c.orbit_class,
            condition_a: c.condition_a,
            annotation: c.annotation.clone(),
            rotation_windows: c.rotation.windows.clone(),
            rotation_warnings: c.rotation.warnings.clone(),
        })
        .collect();
    let boundary_fields = condition.components.iter().filter_map(|c| c.boundary_field.clone()).collect();
    let cert = condition.certificate.clone();
    let condition_iii = ConditionSummary {
        verdict: condition.verdict,
        outcome,
        exit_code: outcome.exit_code(),
        margin_a: condition.margin_a.map(|m| Quantity::new(m, "1", None)),
        margin_b: Quantity::new(cert.epsilon_star, "1/s", Some(cert.discretization_bound)),
        reasons,
    };
    Ok(RunReport {
        config: provenance(config)?,
        orbits,
        condition_iii,
        certificate: cert,
        section,
        timing: Timing { condition_seconds, section_seconds, total_seconds: start.elapsed().as_secs_f64() },
        boundary_fields,
        leaf,
        lp: condition.lp.take(),
    })
}

fn provenance(config: &RunConfig) -> Result<Provenance> {
    let mut effective = config.clone();
    effective.output = None;
    let canonical = serde_json::to_string(&effective)?;
    Ok(Provenance {
        schema_version: SCHEMA_VERSION,
        name: config.name.clone(),
        config_hash: format!("{:x}", Sha256::digest(canonical.as_bytes())),
        seed: config.settings.seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        scenario: config.scenario.clone(),
        class: config.class.clone(),
        settings: config.settings.clone(),
    })
}
