//! Batch analyses of Kronecker solenoids: configuration, orchestration and
//! report persistence behind the `solenoid` binary.

pub mod config;
pub mod run;

pub use config::{resolve, validate_config, Analysis, AnalysisConfig, Resolved, Violation};
pub use run::{execute, CliError, Execution, RunReport};
