//! Metrics and the experiment runner.

pub mod experiment;
pub mod metrics;

pub use metrics::{echo_only_mask, erle, lsd, lsd_frames, sdr, sdr_samples};
pub use experiment::{run_experiment, run_experiment_with_threads, Artifacts, CellAggregate, ExampleMetrics, ExperimentMatrix, ExperimentReport, ProxySpec, Stat, SystemKind, SystemSpec};
