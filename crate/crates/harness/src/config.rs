//! Scenario files: one TOML document per experiment. Every table is optional;
//! omitted keys take the documented defaults.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use twosex::convergence::{Manufactured, Refinement};
use twosex::fixpoint::FixedPointConfig;
use twosex::hum::HumConfig;
use twosex::obslab::bump;
use twosex::{ControlWindows, Field, Grid, RateTable};

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Damped Picard iteration around the HUM synthesis; nonlinear run at the end.
    #[default]
    Fixpoint,
    /// One HUM synthesis with `p` from `fixpoint.initial`.
    Hum,
    /// Observability probes, trace scan and support checks.
    Probe,
    /// Manufactured-solution refinement study.
    Study,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub na: usize,
    pub max_age: f64,
    pub horizon: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            na: 80,
            max_age: 1.0,
            horizon: 0.5,
        }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, HarnessError> {
        Grid::new(self.nx, self.na, self.max_age, self.horizon).map_err(|e| HarnessError::Config(e.to_string()))
    }
}

/// One term of an initial density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Component {
    /// `amplitude sin(mode pi x) sin^2` bump on `(center - half_width, center + half_width)`.
    Bump {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
        center: f64,
        half_width: f64,
    },
    /// `amplitude sin(mode pi x) sin(age_mode pi a / A)`.
    Eigenmode {
        amplitude: f64,
        mode: usize,
        age_mode: usize,
    },
}

fn one() -> usize {
    1
}

impl Component {
    fn eval(&self, x: f64, a: f64, max_age: f64) -> f64 {
        match *self {
            Component::Bump {
                amplitude,
                mode,
                center,
                half_width,
            } => amplitude * (mode as f64 * PI * x).sin() * bump(a, center - half_width, center + half_width),
            Component::Eigenmode {
                amplitude,
                mode,
                age_mode,
            } => amplitude * (mode as f64 * PI * x).sin() * (age_mode as f64 * PI * a / max_age).sin(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub m: Vec<Component>,
    pub f: Vec<Component>,
}

impl InitialData {
    pub fn fields(&self, grid: &Grid) -> (Field, Field) {
        let build =
            |parts: &[Component]| Field::from_fn(grid, |x, a| parts.iter().map(|c| c.eval(x, a, grid.max_age)).sum());
        (build(&self.m), build(&self.f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Seeded random smooth probes added to the deterministic families.
    pub random: usize,
    /// Frozen birth argument, constant in space and time.
    pub frozen_p: f64,
    /// Trace-estimate scan points, strictly inside `(a1, T)`.
    pub etas: Vec<f64>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            random: 20,
            frozen_p: 0.5,
            etas: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: Refinement,
    pub levels: usize,
    pub case: Manufactured,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            mode: Refinement::Joint,
            levels: 3,
            case: Manufactured::default(),
        }
    }
}

/// Pass/fail thresholds; a run exits with status 1 when one is missed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Bound on `|x(T)| / |x0|` for every targeted sex.
    pub final_ratio: f64,
    /// Bound on the population left after an uncontrolled run of length `A`
    /// (female-only runs).
    pub aftermath_ratio: f64,
    /// Allowed relative change of the observability constant when the
    /// random probe count doubles.
    pub probe_stability: f64,
    /// Bound on the relative HUM optimality residual.
    pub optimality: f64,
    pub temporal_order: f64,
    pub spatial_order: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            final_ratio: 1e-2,
            aftermath_ratio: 1e-2,
            probe_stability: 0.2,
            optimality: 1e-4,
            temporal_order: 0.9,
            spatial_order: 1.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "RateTable::reference")]
    pub rates: RateTable,
    #[serde(default = "ControlWindows::reference")]
    pub windows: ControlWindows,
    #[serde(default)]
    pub hum: HumConfig,
    #[serde(default)]
    pub fixpoint: FixedPointConfig,
    #[serde(default)]
    pub initial: InitialData,
    #[serde(default)]
    pub probes: ProbeConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Fully expanded configuration, defaults included. Parsing it gives back
    /// the same configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the echo, hex, first 16 digits.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
