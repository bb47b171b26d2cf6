//! Experiment harness around `plantbench-core`: runs pruning grids over
//! planted mothers in parallel, measures how much of the planted ticket was
//! recovered, and reads and writes TSV, JSON, CSV and `key = value` files.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod io;
pub mod recovery;
pub mod tsv;

pub use experiment::{run_experiment, ExperimentConfig, ResultRow, SparsityTarget, Strategy, StrategyKind};
pub use recovery::{recovery_metrics, RecoveryStats};
