use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohomology::{BoundaryData, DualClass};
use crate::error::{Error, Result};
use crate::geometry::{FlowScenario, RadialProfile};

/// Schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// A run configuration: scenario, cohomology class and numeric settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub name: String,
    pub scenario: ScenarioConfig,
    pub class: ClassConfig,
    #[serde(default)]
    pub settings: NumericSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    T3Linear {
        omega: [f64; 3],
    },
    T3AxisOrbit {
        omega1: f64,
        center: [f64; 2],
    },
    SolidTorus {
        /// Coefficients of the angular speed `f(r) = Σ c_k r^k`.
        profile: Vec<f64>,
        #[serde(default = "default_period")]
        period: f64,
    },
    LinearBlock {
        block: [[f64; 2]; 2],
        #[serde(default)]
        quadratic: Option<[[f64; 3]; 2]>,
        #[serde(default = "default_period")]
        period: f64,
    },
    Hopf,
    Geodesic,
}

fn default_period() -> f64 {
    TAU
}

/// The class `y`, by loop-basis pairings or by boundary data per link component.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassConfig {
    Pairings(Vec<i64>),
    Boundary(Vec<BoundaryData>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericSettings {
    /// Cells per axis of the occupation grid.
    pub grid: usize,
    /// Highest test-function frequency.
    pub frequency: usize,
    pub delta_slack: f64,
    pub horizon_periods: u64,
    pub rotation_seeds: usize,
    pub b_grid: usize,
    pub multiplier_tol: f64,
    /// Vertices per axis of the projection grid.
    pub section_grid: usize,
    pub return_samples: usize,
    /// Return-time cutoff (seconds); defaults to `10 / ε*`.
    pub return_cutoff: Option<f64>,
    /// Leaf level in `[0, 1)`; defaults to a regular value.
    pub level: Option<f64>,
    pub tol: f64,
    pub seed: u64,
}

impl Default for NumericSettings {
    fn default() -> Self {
        Self {
            grid: 8,
            frequency: 1,
            delta_slack: 1e-8,
            horizon_periods: 1 << 14,
            rotation_seeds: 8,
            b_grid: crate::boundary::B_GRID,
            multiplier_tol: 1e-6,
            section_grid: 16,
            return_samples: 1000,
            return_cutoff: None,
            level: None,
            tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Text,
    Json,
    CsvBundle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Option<ReportFormat>,
}

fn config_error(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { location: location.into(), message: message.into() }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| config_error(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(config_error(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        let s = &self.settings;
        for (field, v) in [("settings.delta_slack", s.delta_slack), ("settings.multiplier_tol", s.multiplier_tol), ("settings.tol", s.tol)] {
            if !(v > 0.0) {
                return Err(config_error(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v, min) in [
            ("settings.grid", s.grid, 1),
            ("settings.rotation_seeds", s.rotation_seeds, 1),
            ("settings.b_grid", s.b_grid, 4),
            ("settings.section_grid", s.section_grid, 2),
            ("settings.return_samples", s.return_samples, 1),
        ] {
            if v < min {
                return Err(config_error(field, format!("must be at least {min}, got {v}")));
            }
        }
        if s.horizon_periods < 16 {
            return Err(config_error("settings.horizon_periods", "must be at least 16"));
        }
        if let Some(c) = s.return_cutoff {
            if !(c > 0.0) {
                return Err(config_error("settings.return_cutoff", format!("must be positive, got {c}")));
            }
        }
        if let Some(x) = s.level {
            if !(0.0..1.0).contains(&x) {
                return Err(config_error("settings.level", format!("must lie in [0, 1), got {x}")));
            }
        }
        match &self.scenario {
            ScenarioConfig::SolidTorus { period, .. } | ScenarioConfig::LinearBlock { period, .. } if !(*period > 0.0) => {
                Err(config_error("scenario.period", "must be positive"))
            }
            ScenarioConfig::SolidTorus { profile, .. } if profile.is_empty() => {
                Err(config_error("scenario.profile", "needs at least one coefficient"))
            }
            ScenarioConfig::T3AxisOrbit { omega1, .. } if *omega1 == 0.0 => {
                Err(config_error("scenario.omega1", "must be nonzero"))
            }
            _ => Ok(()),
        }
    }

    pub fn scenario(&self) -> FlowScenario {
        match &self.scenario {
            ScenarioConfig::T3Linear { omega } => FlowScenario::t3_linear(*omega),
            ScenarioConfig::T3AxisOrbit { omega1, center } => FlowScenario::t3_axis_orbit(*omega1, *center),
            ScenarioConfig::SolidTorus { profile, period } => {
                FlowScenario::solid_torus(RadialProfile { coeffs: profile.clone() }, *period)
            }
            ScenarioConfig::LinearBlock { block, quadratic, period } => match quadratic {
                Some(q) => FlowScenario::linear_block_with_quadratic(*block, *q, *period),
                None => FlowScenario::linear_block(*block, *period),
            },
            ScenarioConfig::Hopf => FlowScenario::hopf(),
            ScenarioConfig::Geodesic => FlowScenario::geodesic(),
        }
    }

    pub fn class(&self, s: &FlowScenario) -> Result<DualClass> {
        let class = match &self.class {
            ClassConfig::Pairings(p) => DualClass::from_pairings(s, p),
            ClassConfig::Boundary(b) => DualClass::from_boundary(s, b),
        };
        class.map_err(|e| config_error("class", e.to_string()))
    }
}
