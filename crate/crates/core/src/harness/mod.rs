//! Scenario configuration, the simulation loop, metrics and persistence.

pub mod compare;
pub mod config;
pub mod output;
pub mod record;
pub mod run;
pub mod sweep;

use thiserror::Error;

pub use compare::{compare_records, compare_runs, Comparison};
pub use config::{ControllerKind, PlantKind, Profile, ScenarioConfig};
pub use output::{emit_outputs, read_run};
pub use record::{Row, Summary, SummaryContext, Verdict};
pub use run::{build_plant, calibrate_rho, run_scenario, Calibration, RunFailure, RunRecord};
pub use sweep::{expand, run_sweep, SweepParam, SweepPoint};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("runs are not comparable: {0}")]
    Mismatch(String),
    #[error("i/o error: {0}")]
    Io(String),
}
