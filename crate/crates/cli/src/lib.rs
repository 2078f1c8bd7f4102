//! Configuration, checkpoints, exports and subcommands of the `hyperdisc`
//! command-line tool.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod export;

pub use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
