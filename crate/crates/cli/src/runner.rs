//! Shared run plumbing: error-to-exit-code classification, the parallel
//! seed loop, deterministic stream seeding, and output-directory writing.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{Config, ConfigError};
use crate::metrics::{to_csv, MetricRecord, MetricValue};

/// Failure classification for the process exit code: configuration problems
/// exit 2, numerical failures exit 3, I/O problems exit 1.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numerical(m) => write!(f, "numerical failure: {m}"),
            RunError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.0)
    }
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

/// Environment-construction failures (graph, chain, oracle, policies) abort
/// the run as numerical; per-method estimate failures are recorded as
/// `divergent` cells instead and never pass through here.
pub fn fatal(context: &str, e: gendice::Error) -> RunError {
    RunError::Numerical(format!("{context}: {e}"))
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Results of one experiment run, ready to be written out.
#[derive(Debug, Default)]
pub struct RunOutput {
    /// Per-seed rows followed by aggregate rows.
    pub records: Vec<MetricRecord>,
    /// Optional per-seed training traces as `(seed, csv text)`.
    pub traces: Vec<(u64, String)>,
    /// Optional per-seed final ratio tables as `(seed, csv text)`.
    pub tables: Vec<(u64, String)>,
}

impl RunOutput {
    /// True when some aggregated cell has no finite seed at all; the CLI
    /// exits 3 in that case (single divergent seeds are just data).
    pub fn has_fully_divergent_cell(&self) -> bool {
        self.records
            .iter()
            .any(|r| r.seed.is_none() && r.metric.ends_with("_mean") && r.value == MetricValue::Divergent)
    }
}

/// Deterministic sub-stream seed from a tuple of indices, so every dataset
/// draw is independent of thread scheduling and of the other sweep axes.
pub fn stream_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        let mut x = p.wrapping_add(h);
        // splitmix64 finalizer.
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = x ^ (x >> 31);
    }
    h
}

/// Runs `work(seed)` for every seed `0..seeds` on up to `jobs` threads and
/// returns the results in seed order. Each seed's computation derives its
/// randomness from the seed alone, so results are independent of `jobs`.
pub fn parallel_seeds<T, F>(seeds: usize, jobs: usize, work: F) -> Vec<RunResult<T>>
where
    T: Send,
    F: Fn(u64) -> RunResult<T> + Sync,
{
    let workers = jobs.max(1).min(seeds.max(1));
    if workers <= 1 {
        return (0..seeds as u64).map(&work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<RunResult<T>>>> =
        (0..seeds).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= seeds {
                    break;
                }
                let result = work(index as u64);
                *slots[index].lock().expect("seed slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("seed slot poisoned")
                .expect("worker filled every claimed slot")
        })
        .collect()
}

/// Writes `results.csv`, the resolved configuration, and any per-seed trace
/// and ratio-table files into `out_dir` (created if needed).
pub fn write_outputs(out_dir: &Path, config: &Config, output: &RunOutput) -> RunResult<()> {
    let io = |e: std::io::Error| RunError::Io(format!("{}: {e}", out_dir.display()));
    std::fs::create_dir_all(out_dir).map_err(io)?;
    std::fs::write(out_dir.join("results.csv"), to_csv(&output.records)).map_err(io)?;
    std::fs::write(out_dir.join("resolved.cfg"), config.resolved()).map_err(io)?;
    for (seed, text) in &output.traces {
        std::fs::write(out_dir.join(format!("trace_{seed}.csv")), text).map_err(io)?;
    }
    for (seed, text) in &output.tables {
        std::fs::write(out_dir.join(format!("tau_{seed}.csv")), text).map_err(io)?;
    }
    Ok(())
}
