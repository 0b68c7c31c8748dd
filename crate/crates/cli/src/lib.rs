//! Command-line experiment runner for the `capa-core` solvers.
//!
//! A run starts from an [`config::ExperimentConfig`] (TOML), executes the
//! requested methods once ([`run`]), across a parameter range ([`sweep`])
//! or under a timing harness ([`bench`]), and writes CSV/JSON tables.

pub mod bench;
pub mod config;
pub mod error;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::CliError;
