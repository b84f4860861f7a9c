//! File formats: checkpoints, trajectory logs and run configuration.

pub mod checkpoint;
pub mod config;
pub mod trajectory;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use config::{resolve_map, RunConfig, RunConfigError};
pub use trajectory::{StepRecord, TrajectoryError, TrajectoryHeader, TrajectoryLog};
