//! Command implementations behind the `peer-auction` binary.

pub mod config;
pub mod error;
pub mod run;
pub mod tools;

pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;
pub use run::{cmd_run, RunReport};
pub use tools::{cmd_demo, cmd_gen, cmd_oracle};
