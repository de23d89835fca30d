//! Experiment orchestration: configuration, parallel deterministic trials,
//! metrics, sweeps and run manifests.

pub mod checks;
pub mod config;
pub mod manifest;
pub mod metrics;
pub mod sweep;
pub mod trials;

pub use config::ExperimentConfig;
pub use manifest::RunManifest;
pub use metrics::{compute_edr, compute_nmse, mean_ci, NMSE_FLOOR_DB};
pub use sweep::{sweep, Axis};
pub use trials::{run_trials, simulate_trial, MetricsReport, TrialMetrics, TrialRecord};
