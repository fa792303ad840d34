//! Scenario configuration (TOML, schema-versioned).

use std::path::{Path, PathBuf};

use halfspace_core::ideals::ideal_from_name;
use halfspace_core::{IdealSpec, OperatorSpec};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;
pub const MIN_DIM: usize = 64;
/// The derivation stage works with dense `N x N` test operators.
pub const MAX_DERIVATION_DIM: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose2,
    Oblique,
    Refine3,
    Derivation,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Decompose2 => "decompose2",
            Stage::Oblique => "oblique",
            Stage::Refine3 => "refine3",
            Stage::Derivation => "derivation",
        }
    }
}

/// Either a named preset or a full operator description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecEntry {
    Preset(String),
    Full(OperatorSpec),
}

impl SpecEntry {
    pub fn resolve(&self) -> Result<OperatorSpec, CliError> {
        match self {
            SpecEntry::Full(s) => Ok(s.clone()),
            SpecEntry::Preset(name) => match name.as_str() {
                "harmonic" => Ok(OperatorSpec::harmonic()),
                "shift" => Ok(OperatorSpec::shift()),
                "odd_harmonic" => Ok(OperatorSpec::odd_harmonic()),
                "nilpotent_pair" => Ok(OperatorSpec::nilpotent_pair(1.0)),
                other => Err(CliError::Config(format!("spec: unknown preset {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub engine: u64,
    #[serde(default)]
    pub x_seed: u64,
    #[serde(default = "default_x_count")]
    pub x_count: usize,
}

fn default_x_count() -> usize {
    100
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { engine: 0, x_seed: 0, x_count: default_x_count() }
    }
}

/// Overrides of the default certificate tolerances. `epsilon` budgets are
/// not tolerances and are never scaled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub rank: Option<f64>,
    pub offdiag: Option<f64>,
    pub block_action: Option<f64>,
    pub residual: Option<f64>,
    pub idempotency: Option<f64>,
    pub spectrum: Option<f64>,
    pub reassembly: Option<f64>,
    pub split: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub report: Option<PathBuf>,
    pub blocks_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub spec: SpecEntry,
    pub dim: usize,
    pub epsilon: f64,
    #[serde(default = "default_ideal")]
    pub ideal: String,
    #[serde(default = "default_pipeline")]
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub output: Outputs,
}

fn default_ideal() -> String {
    "trace".into()
}

fn default_pipeline() -> Vec<Stage> {
    vec![Stage::Decompose2]
}

impl ScenarioConfig {
    pub fn new(spec: SpecEntry, dim: usize, epsilon: f64) -> Self {
        ScenarioConfig {
            schema_version: CONFIG_VERSION,
            spec,
            dim,
            epsilon,
            ideal: default_ideal(),
            pipeline: default_pipeline(),
            seeds: Seeds::default(),
            tolerances: ToleranceOverrides::default(),
            output: Outputs::default(),
        }
    }

    pub fn ideal_spec(&self) -> Result<IdealSpec, CliError> {
        ideal_from_name(&self.ideal).map_err(|e| CliError::Config(format!("ideal: {e}")))
    }

    pub fn operator(&self) -> Result<OperatorSpec, CliError> {
        self.spec.resolve()
    }

    /// Sorted, deduplicated stages with their prerequisites added.
    pub fn stages(&self) -> Vec<Stage> {
        let mut s = self.pipeline.clone();
        if s.iter().any(|&x| x != Stage::Decompose2) {
            s.push(Stage::Decompose2);
        }
        if s.contains(&Stage::Derivation) {
            s.push(Stage::Refine3);
        }
        s.sort();
        s.dedup();
        s
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {CONFIG_VERSION}, found {}",
                self.schema_version
            )));
        }
        if self.dim < MIN_DIM {
            return Err(CliError::Config(format!("dim: {} is below {MIN_DIM}", self.dim)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(CliError::Config(format!("epsilon: {} is outside (0, 1)", self.epsilon)));
        }
        if self.pipeline.is_empty() {
            return Err(CliError::Config("pipeline: no stages".into()));
        }
        if self.pipeline.contains(&Stage::Derivation) {
            if self.seeds.x_count == 0 {
                return Err(CliError::Config("seeds.x_count: must be positive".into()));
            }
            if self.dim > MAX_DERIVATION_DIM {
                return Err(CliError::Config(format!(
                    "dim: {} exceeds {MAX_DERIVATION_DIM} for the derivation stage",
                    self.dim
                )));
            }
        }
        self.ideal_spec()?;
        self.operator()?;
        let t = &self.tolerances;
        for (name, v) in [
            ("rank", t.rank),
            ("offdiag", t.offdiag),
            ("block_action", t.block_action),
            ("residual", t.residual),
            ("idempotency", t.idempotency),
            ("spectrum", t.spectrum),
            ("reassembly", t.reassembly),
            ("split", t.split),
            ("bound", t.bound),
        ] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CliError::Config(format!("tolerances.{name}: {v} is not a nonnegative number")));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}
