//! Experiment runner behind the `bench` command: multi-seed campaigns,
//! summary statistics, rank-sum comparisons and CSV/DOT artifacts.

pub mod compare;
pub mod config;
pub mod output;
pub mod runner;
pub mod stats;

use thiserror::Error;

pub use config::{Algorithm, ExperimentConfig, Problem};
pub use runner::{run_experiment, Experiment};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dataset: {0}")]
    Data(#[from] eldt_core::datagen::DataError),
    #[error("flow shop: {0}")]
    Hfs(#[from] eldt_core::hfs::HfsError),
    #[error("environment: {0}")]
    Env(#[from] eldt_core::env::EnvError),
    #[error("grammar: {0}")]
    Grammar(#[from] eldt_core::ge::GrammarError),
    #[error("evolution: {0}")]
    Ge(#[from] eldt_core::ge::GeError),
    #[error("baseline: {0}")]
    Baseline(#[from] eldt_core::baselines::BaselineError),
    #[error("statistics: {0}")]
    Stats(#[from] stats::StatsError),
}
