//! Std companion to `poolea-core`: clocks, a directory-backed store, a
//! latency-simulating store, experiment orchestration, CSV reports and the
//! command-line front end.

pub mod cli;
pub mod clock;
pub mod config;
pub mod dir_store;
pub mod experiment;
pub mod report;
pub mod sim_store;

pub use poolea_core as core;

pub use clock::{SystemClock, VirtualClock};
pub use config::{Backend, EaOverrides, ExperimentSpec};
pub use dir_store::DirectoryStore;
pub use experiment::{
    run_experiment, run_experiment_with, run_repetition, run_repetition_with, RepetitionOutcome,
    Workers,
};
pub use report::{summarize, summarize_runs, ExperimentReport, RunRecord, SummaryRow};
pub use sim_store::{LatencySimStore, SimParticipant, VisibilityEvent};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] poolea_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("report: {0}")]
    Report(String),
}
