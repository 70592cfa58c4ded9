//! Configuration, checkpoints and commands behind the `antideriv` binary.

pub mod checkpoint;
pub mod commands;
pub mod config;

pub use checkpoint::{Checkpoint, CheckpointError, CheckpointMethod};
pub use config::{ConfigError, RunConfig};
