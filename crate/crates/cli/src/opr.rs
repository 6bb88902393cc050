//! Vertex-importance recovery from logged random walks: per seed, generate
//! (or load) a graph, run the random surfer, collect a walk, and score every
//! estimator's recovered stationary distribution against the chain's true
//! one by log KL divergence.

use std::fmt::Write as _;

use gendice::baselines::fit_model;
use gendice::estimator::{ratio_table, train, GenDiceConfig, SaddleParams, TrainOutput};
use gendice::exact::{empirical_chain, estimate_stationary, exact_ratio_solve};
use gendice::graph::{barabasi_albert, load_edge_list, pagerank_chain, random_walk_dataset, Graph};
use gendice::nn::OutputHead;
use gendice::{Distribution, FDivergence, MarkovChain, Policy, TransitionDataset};

use crate::config::{Config, GenDiceSettings};
use crate::metrics::{aggregate, log_kl, MetricRecord, MetricValue};
use crate::runner::{fatal, parallel_seeds, stream_seed, RunOutput, RunResult};

/// One training cell: the saddle-point estimator with a particular
/// divergence, head, and mean-one mechanism.
#[derive(Debug, Clone)]
pub(crate) struct Variant {
    pub divergence: FDivergence,
    pub lambda: f64,
    pub self_normalize: bool,
    pub head: OutputHead,
}

impl Variant {
    pub(crate) fn penalty(settings: &GenDiceSettings) -> Self {
        Self {
            divergence: settings.divergence,
            lambda: settings.lambda,
            self_normalize: false,
            head: settings.head,
        }
    }

    pub(crate) fn self_normalized(settings: &GenDiceSettings) -> Self {
        Self {
            divergence: settings.divergence,
            lambda: 0.0,
            self_normalize: true,
            head: settings.head,
        }
    }
}

/// Trains the tabular ratio model on a logged dataset.
pub(crate) fn train_once(
    settings: &GenDiceSettings,
    variant: &Variant,
    data: &TransitionDataset<f64>,
    seed: u64,
    trace_every: usize,
) -> gendice::Result<TrainOutput<f64>> {
    let config = GenDiceConfig {
        divergence: variant.divergence,
        lambda: variant.lambda,
        gamma: settings.gamma,
        lr_tau: settings.lr,
        lr_f: settings.lr,
        lr_u: settings.lr,
        batch_size: settings.batch_size,
        steps: settings.steps,
        seed,
        optimizer: settings.optimizer,
        positive_head: variant.head,
        self_normalize: variant.self_normalize,
        trace_every,
    };
    let params = SaddleParams::tabular(data.n_states(), data.n_actions(), &config)?;
    let policy = Policy::uniform(data.n_states(), data.n_actions());
    train(&config, data, &policy, params)
}

/// The trained table read out as a corrected distribution over states.
pub(crate) fn corrected_distribution(
    output: &TrainOutput<f64>,
    data: &TransitionDataset<f64>,
) -> gendice::Result<Vec<f64>> {
    // One-action datasets make the pair table a state table directly.
    let tau = ratio_table(&output.params);
    estimate_stationary(&tau, data)
}

fn kl_cell(result: gendice::Result<Vec<f64>>, truth: &[f64]) -> MetricValue {
    match result {
        Ok(est) => MetricValue::Finite(log_kl(&est, truth)),
        Err(_) => MetricValue::Divergent,
    }
}

fn row(
    method: &str,
    seed: u64,
    size: usize,
    gamma: f64,
    lambda: Option<f64>,
    value: MetricValue,
) -> MetricRecord {
    MetricRecord {
        task: "opr",
        method: method.to_string(),
        seed: Some(seed),
        n_samples: Some(size),
        alpha: None,
        gamma: Some(gamma),
        lambda,
        metric: "log-kl".to_string(),
        value,
    }
}

pub(crate) struct SeedEnvironment {
    pub chain: MarkovChain<f64>,
    pub truth: Vec<f64>,
}

/// Builds the surfer chain and its exact stationary distribution for one
/// seed (regenerating the graph unless a fixed one was loaded).
pub(crate) fn seed_environment(
    config: &Config,
    fixed: Option<&Graph<f64>>,
    seed: u64,
) -> RunResult<SeedEnvironment> {
    let g = &config.graph;
    let owned;
    let graph = match fixed {
        Some(graph) => graph,
        None => {
            owned = barabasi_albert::<f64>(g.n, g.m, g.m0, stream_seed(&[seed, 0]))
                .map_err(|e| fatal("graph generation", e))?;
            &owned
        }
    };
    let chain = pagerank_chain(graph, g.eta).map_err(|e| fatal("surfer chain", e))?;
    let mu0 = chain.mu0().clone();
    let truth = chain
        .stationary(config.gendice.gamma, &mu0, 1e-13, 2_000_000)
        .map_err(|e| fatal("ground-truth stationary distribution", e))?;
    Ok(SeedEnvironment {
        chain,
        truth: truth.probs().to_vec(),
    })
}

pub(crate) fn load_fixed_graph(config: &Config) -> RunResult<Option<Graph<f64>>> {
    match &config.graph.edge_file {
        None => Ok(None),
        Some(path) => load_edge_list(path)
            .map(|loaded| Some(loaded.graph))
            .map_err(|e| crate::runner::RunError::Config(format!(
                "edge file {}: {e}",
                path.display()
            ))),
    }
}

struct SeedResult {
    records: Vec<MetricRecord>,
    trace: Option<String>,
    table: Option<String>,
}

fn run_seed(config: &Config, fixed: Option<&Graph<f64>>, seed: u64) -> RunResult<SeedResult> {
    let env = seed_environment(config, fixed, seed)?;
    let settings = &config.gendice;
    let gamma = settings.gamma;
    let trace_every = if config.experiment.trace {
        (settings.steps / 100).max(1)
    } else {
        0
    };
    let mut records = Vec::new();
    let mut trace_text = String::new();
    let mut table_text = String::new();
    for (size_index, &size) in config.samples.sizes.iter().enumerate() {
        let data = random_walk_dataset(&env.chain, size, stream_seed(&[seed, 1, size_index as u64]))
            .map_err(|e| fatal("random walk", e))?;

        let trained = train_once(settings, &Variant::penalty(settings), &data, seed, trace_every);
        if let Ok(output) = &trained {
            if config.experiment.trace {
                for entry in &output.trace {
                    let _ = writeln!(
                        trace_text,
                        "{},{},{}",
                        size, entry.step, entry.objective
                    );
                }
                if size_index + 1 == config.samples.sizes.len() {
                    table_text.push_str("state,tau\n");
                    for (state, tau) in ratio_table(&output.params).iter().enumerate() {
                        let _ = writeln!(table_text, "{state},{tau}");
                    }
                }
            }
        }
        records.push(row(
            "gendice",
            seed,
            size,
            gamma,
            Some(settings.lambda),
            kl_cell(
                trained.and_then(|out| corrected_distribution(&out, &data)),
                &env.truth,
            ),
        ));

        if config.baselines.self_normalized {
            // Equal compute, not equal steps: every self-normalized update
            // must also sweep the whole dataset to form the normalizing
            // mean, so in the same sample-evaluation budget it completes
            // proportionally fewer steps than the penalty method.
            let batch = settings.batch_size.min(data.len());
            let budget_steps = ((settings.steps as u128 * batch as u128)
                / (batch as u128 + data.len() as u128))
                .max(1) as usize;
            let scaled = GenDiceSettings {
                steps: budget_steps,
                ..settings.clone()
            };
            let output = train_once(&scaled, &Variant::self_normalized(settings), &data, seed, 0);
            records.push(row(
                "gendice-selfnorm",
                seed,
                size,
                gamma,
                Some(0.0),
                kl_cell(
                    output.and_then(|out| corrected_distribution(&out, &data)),
                    &env.truth,
                ),
            ));
        }

        if config.baselines.exact {
            let solved = empirical_chain(&data).and_then(|emp| {
                let mu0 = emp.chain.mu0().clone();
                let tau = exact_ratio_solve(&emp.chain, &emp.sampling, gamma, &mu0)?;
                estimate_stationary(&tau, &data)
            });
            records.push(row("gendice-exact", seed, size, gamma, None, kl_cell(solved, &env.truth)));
        }

        if config.baselines.model_based {
            let n = data.n_states();
            let modeled = fit_model(&data, config.baselines.smoothing).and_then(|model| {
                let mdp = model.to_mdp(Distribution::uniform(n), gamma)?;
                let chain = mdp.induced_chain(&Policy::uniform(n, 1))?;
                let mu0 = chain.mu0().clone();
                let occupancy = chain.stationary(gamma, &mu0, 1e-12, 2_000_000)?;
                Ok(occupancy.probs().to_vec())
            });
            records.push(row("model-based", seed, size, gamma, None, kl_cell(modeled, &env.truth)));
        }
    }
    Ok(SeedResult {
        records,
        trace: (!trace_text.is_empty())
            .then(|| format!("n_samples,step,objective\n{trace_text}")),
        table: (!table_text.is_empty()).then_some(table_text),
    })
}

pub fn run(config: &Config) -> RunResult<RunOutput> {
    let fixed = load_fixed_graph(config)?;
    let results = parallel_seeds(config.experiment.seeds, config.experiment.jobs, |seed| {
        run_seed(config, fixed.as_ref(), seed)
    });
    let mut output = RunOutput::default();
    for (seed, result) in results.into_iter().enumerate() {
        let result = result?;
        output.records.extend(result.records);
        if let Some(text) = result.trace {
            output.traces.push((seed as u64, text));
        }
        if let Some(text) = result.table {
            output.tables.push((seed as u64, text));
        }
    }
    let aggregates = aggregate(&output.records);
    output.records.extend(aggregates);
    Ok(output)
}
