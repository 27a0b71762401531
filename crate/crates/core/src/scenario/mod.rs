//! The "n sources + VBR" experiment harness.

pub mod config;
pub mod network;
pub mod report;

pub use config::{PathDelays, ScenarioConfig, PRESETS};
pub use network::{CellLedger, Simulation, TraceOptions, Traces};
pub use report::{boundedness_verdict, run_scenario, RunReport, Verdict};
