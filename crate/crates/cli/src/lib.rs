//! Scenario files, subcommand execution and manifest comparison behind the
//! `lorentzkit` binary.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{ConfigError, ScenarioConfig};
pub use manifest::{diff, Assertion, FieldDiff, Manifest};
pub use run::{execute, RunError, Subcommand};
