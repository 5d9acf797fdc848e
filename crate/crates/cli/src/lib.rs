//! Command-line harness: run a workload on the simulator, compare it with
//! its sequential oracle, and report as sorted-key JSON.

pub mod cli;
pub mod config;
pub mod run;
pub mod verify;

pub use cli::{main_with_args, Cli};
pub use config::{ConfigError, RunConfig, Workload};
pub use run::{execute, Execution, RunError};
pub use verify::{verify, VerifySummary};
