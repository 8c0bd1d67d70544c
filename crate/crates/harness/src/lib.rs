//! Experiment harness: scenario files, batch runs, interactive sessions,
//! replay and result tables.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod protocol;
pub mod serve;

pub use config::{Mode, ScenarioConfig};
pub use error::HarnessError;
pub use experiment::{run_scenario, Command, Driver, Experiment, ExperimentReport};
pub use output::{emit_report, ReportFormat};
pub use serve::{replay, ServeOptions, Server, Session};
