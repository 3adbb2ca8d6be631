//! Configuration-driven Monte Carlo harness for self-heterodyne range
//! sensing experiments.

pub mod config;
pub mod harness;
pub mod output;
pub mod selftest;

pub use config::{validate_config, ConfigError, ExperimentConfig, RangeMode, Sweep, SweepVariable, TrajectoryMode};
pub use harness::{run_sweep, HarnessError, ResultRow};
pub use output::{emit_results, trajectory_table, Format};
