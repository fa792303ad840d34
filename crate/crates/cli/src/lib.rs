//! Scenario runner for the half-space pipeline: configuration, an
//! independent certificate checker, canonical reports and CSV dumps.

pub mod checker;
pub mod config;
pub mod report;
pub mod scenario;

pub use checker::{env_scale, Tolerances, TOL_SCALE_ENV};
pub use config::{load_config, parse_config, ScenarioConfig, SpecEntry, Stage};
pub use report::{verify_report, verify_text, Check, Report, Verification, EXIT_CONFIG, EXIT_INVARIANT, EXIT_NUMERICAL, EXIT_OK};
pub use scenario::{run_scenario, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
    #[error("report version error: {0}")]
    ReportVersion(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}
