//! CLI-facing layer: experiment configuration, deterministic parallel
//! Monte Carlo pooling, experiment dispatch, and report emission.

pub mod config;
pub mod mc;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, Params, ProcessKind};
pub use mc::{config_hash, mc_aggregate, run_with_workers, workers_from_env, WorkerSummary};
pub use report::{write_failure_manifest, write_manifest, RunManifest};
pub use runner::run_experiment;
