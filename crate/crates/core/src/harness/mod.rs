//! Experiment harness: scenario presets, full runs scored against ground
//! truth, parameter sweeps, and file exports.

pub mod config;
pub mod export;
pub mod metrics;
pub mod run;
pub mod sweep;
pub mod truth;

pub use config::{Scenario, ScenarioConfig, SweepSpec};
pub use export::{export_artifacts, load_report};
pub use run::{run_scenario, run_scenario_timed, Analysis, ExperimentReport, Timings};
pub use sweep::{summary_csv, sweep, SweepCell};
pub use truth::{label_states_ground_truth, GroundTruth};
