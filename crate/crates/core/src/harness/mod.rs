//! Experiment configuration, the runner, result files and the command line.

pub mod cli;
pub mod compare;
pub mod config;
pub mod runner;

pub use compare::{compare_pair, compare_policies, ComparisonReport, PairComparison, SignTest};
pub use config::{DatasetSpec, EtaName, EtaSpec, ExperimentConfig, FairnessName, FairnessSpec, Mode, PolicySpec, ThresholdSpec};
pub use runner::{
    build_environment, load_runs, read_rows, reference_accuracy, run_experiment, run_single, summarize_dir,
    Environment, ExperimentReport, ExperimentSummary, RoundRow, RunSummary, CSV_COLUMNS,
};
