//! Reproduction harness: experiment configuration files, sweep orchestration,
//! CSV/JSON output and static SVG plots, plus the trajectory-vs-master-
//! equation oracle check.

pub mod config;
pub mod figures;
pub mod oracle;
pub mod output;

pub use config::{ExperimentKind, FileConfig, ResolvedConfig};
pub use figures::{run_experiment, RunArtifacts, RunOptions};
pub use oracle::{oracle_check, OracleReport};
