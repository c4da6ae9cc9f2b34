//! Experiment configuration, orchestration and reporting.

mod compare;
mod config;
mod experiment;
mod report;

pub use compare::{compare_reduction, Comparison, ComparisonEntry, COMPARE_P_MAX, UNREDUCED_LIMIT};
pub use config::{
    config_schema, preset, ExperimentConfig, LawConfig, ModelConfig, PotentialChoice, PotentialPreset, ReductionConfig,
    PRESETS,
};
pub use experiment::{export_model, export_reduced, export_tensors, law_for, run_experiment, Plant};
pub use report::{BetaRow, LawRow, ModelSummary, OptimumRow, Provenance, ReductionSummary, Report};
