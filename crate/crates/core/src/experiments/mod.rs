//! Experiment harness behind the `vakon` binary.

pub mod config;
pub mod output;
pub mod runs;
pub mod seed;

pub use config::{ExperimentConfig, Model, RawConfig, SeedData};
pub use runs::{
    run_bvp, run_check, run_convergence, run_energy_study, run_flow, run_oracle, CheckReport,
    ConvergenceRow, EnergySummary, RunSummary,
};

use crate::error::VakonError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Solver(#[from] VakonError),
    #[error("output failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for everything that went wrong while solving.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Solver(VakonError::InvalidParams(_)) => 1,
            _ => 2,
        }
    }
}
