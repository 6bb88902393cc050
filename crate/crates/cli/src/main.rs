//! `gendice` — seeded, reproducible experiment runs that estimate stationary
//! distributions and policy values from logged data, writing `results.csv`
//! and the resolved configuration into an output directory.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when a run fails
//! numerically (or every seed of some cell diverges), 1 on I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gendice_cli::config::Config;
use gendice_cli::runner::{write_outputs, RunError};
use gendice_cli::{run_task, Task};

#[derive(Parser)]
#[command(
    name = "gendice",
    about = "Stationary-ratio estimation experiments over logged data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover a random surfer's stationary distribution from logged walks.
    Opr(RunArgs),
    /// Evaluate a fixed policy on the taxi gridworld from off-policy data.
    OpeTaxi(RunArgs),
    /// Sweep one factor of the training recipe on the logged-walk task.
    Ablate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file ([section] headers over key = value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv and resolved.cfg.
    #[arg(long, default_value = "gendice-out")]
    out: PathBuf,
    /// Override the configured number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Override the configured worker-thread count.
    #[arg(long)]
    jobs: Option<usize>,
}

fn execute(task: Task, args: &RunArgs) -> Result<String, RunError> {
    let mut config = Config::from_path(&args.config)?;
    if let Some(seeds) = args.seeds {
        if seeds == 0 {
            return Err(RunError::Config("--seeds must be at least 1".to_string()));
        }
        config.experiment.seeds = seeds;
    }
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(RunError::Config("--jobs must be at least 1".to_string()));
        }
        config.experiment.jobs = jobs;
    }
    let output = run_task(task, &config)?;
    write_outputs(&args.out, &config, &output)?;
    if output.has_fully_divergent_cell() {
        return Err(RunError::Numerical(format!(
            "every seed diverged in at least one cell; partial results written to {}",
            args.out.display()
        )));
    }
    Ok(format!(
        "{}: {} rows -> {}",
        task.name(),
        output.records.len(),
        args.out.join("results.csv").display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match &cli.command {
        Command::Opr(args) => (Task::Opr, args),
        Command::OpeTaxi(args) => (Task::OpeTaxi, args),
        Command::Ablate(args) => (Task::Ablate, args),
    };
    match execute(task, args) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("{error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
