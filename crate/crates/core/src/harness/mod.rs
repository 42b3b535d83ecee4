//! Experiment configuration, metrics, runners and report emission.

pub mod config;
pub mod metrics;
pub mod report;
pub mod runners;

pub use config::{DatasetSpec, ExperimentConfig, Variant};
pub use metrics::{evaluate, metrics, DomainMetrics, Metrics, MetricsReport};
pub use report::{write_atomic, write_json, write_run, write_sweep};
pub use runners::{
    audit, evaluate_params, prepare, run_ablation, run_full, run_prepared, run_zero_shot, sweep,
    zero_shot_from, CurvePoint, Prepared, RunOutput, RunReport, SweepCell, SweepGrid, ZeroShotReport,
};
