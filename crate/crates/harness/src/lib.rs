//! Scenario runner for the `twosex` solvers: TOML configuration, bundled
//! scenarios, pipelines with pass/fail verdicts, and deterministic artifacts.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod scenarios;

pub use config::{Pipeline, ScenarioConfig};
pub use error::HarnessError;
pub use pipeline::{run, Outcome, Summary, Verdict};
