//! Reproducible experiment orchestration: declarative configs, run
//! execution with persisted artifacts, grid sweeps, and fit reports.

mod config;
mod manifest;
mod report;
mod run;

pub use config::{
    ConfigError, EmbeddingSettings, ExperimentConfig, GatewaySettings, PathsConfig, PromptFlags,
    Pricing, RagSettings, SelectionConfig, SelectionMethod, C_GRID, K_GRID, RAG_K_GRID,
};
pub use manifest::{dataset_checksum, DocumentTrace, RunManifest};
pub use report::{cost_points, fit_cost_curve, write_fit_report, FitReportRow};
pub use run::{
    load_predictions, load_raw_outputs, read_sweep_csv, run_experiment, sweep, write_sweep_csv,
    CostSummary, ExperimentError, RunOutput, SweepOutcome, SweepRow,
};
