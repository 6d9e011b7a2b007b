//! Orchestration of the dataset-factory stages over file-drop inputs:
//! per-sample manifests, resumable stage execution, mask-robustness studies,
//! and report aggregation.

pub mod config;
pub mod manifest;
pub mod report;
pub mod robustness;
pub mod run;

pub use config::RunConfig;
pub use manifest::SampleManifest;
pub use report::{
    MethodRow, MethodSample, ReportError, aggregate_tables, load_report_dir, render_text_table,
};
pub use robustness::{RobustnessRow, robustness_study};
pub use run::{
    PipelineError, RunReport, SampleOutcome, StageState, hash_dir_tree, run_pipeline,
};
