//! Experiment configuration, runs, verification suites and reports.

pub mod config;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{
    ArchConfig, BoundSettings, EwcSettings, ExperimentConfig, LambdaSchedule, Method, TrainingConfig, DEFAULT_LAMBDA,
};
pub use report::{report, summarize, RunSummary, SummaryCell, SUMMARY_COLUMNS};
pub use run::{run_experiment, run_seed, RunArtifacts, SeedArtifacts, SeedRun};
pub use verify::{verify_suite, CheckOutcome, VerifyReport, VerifyScope};
