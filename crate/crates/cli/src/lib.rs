//! Experiment harness over the ratio-estimation library: configuration
//! parsing, the three experiment runners, and the CSV metrics contract.
//! The binary in `main.rs` is a thin argument layer over [`run_task`].

pub mod ablate;
pub mod config;
pub mod metrics;
pub mod opr;
pub mod runner;
pub mod taxi_ope;

use config::Config;
use runner::{RunOutput, RunResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Stationary-distribution recovery of a random surfer from logged
    /// walks.
    Opr,
    /// Off-policy evaluation on the gridworld taxi.
    OpeTaxi,
    /// One-factor ablations of the training recipe.
    Ablate,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Opr => "opr",
            Task::OpeTaxi => "ope-taxi",
            Task::Ablate => "ablate",
        }
    }
}

/// Runs one experiment to completion and returns its records (per-seed rows
/// followed by aggregates) plus any per-seed artifacts.
pub fn run_task(task: Task, config: &Config) -> RunResult<RunOutput> {
    match task {
        Task::Opr => opr::run(config),
        Task::OpeTaxi => taxi_ope::run(config),
        Task::Ablate => ablate::run(config),
    }
}
