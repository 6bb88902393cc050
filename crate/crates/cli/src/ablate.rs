//! One-factor ablation sweeps around the default training recipe, on the
//! same logged-walk setup as the vertex-importance task: divergence choice,
//! penalty weight, ratio-head activation, and penalty on/off. Every cell
//! reports the recovered-distribution quality (log KL) and the final
//! dataset mean of the ratio, whose drift away from one is the signature of
//! the unpenalized degenerate solutions.

use gendice::estimator::{ratio_table, TrainOutput};
use gendice::graph::random_walk_dataset;
use gendice::{FDivergence, TransitionDataset};

use crate::config::{AblationFactor, Config, GenDiceSettings};
use crate::metrics::{aggregate, log_kl, MetricRecord, MetricValue};
use crate::opr::{corrected_distribution, load_fixed_graph, seed_environment, train_once, Variant};
use crate::runner::{fatal, parallel_seeds, stream_seed, RunOutput, RunResult};

/// One sweep cell: a label for the method column, the lambda to report, and
/// the training variant to run.
struct Sweep {
    label: String,
    lambda_column: Option<f64>,
    variant: Variant,
}

fn cells(config: &Config) -> Vec<Sweep> {
    let settings = &config.gendice;
    let a = &config.ablate;
    match a.factor {
        AblationFactor::Lambda => a
            .lambdas
            .iter()
            .map(|&lambda| Sweep {
                label: "gendice".to_string(),
                lambda_column: Some(lambda),
                variant: Variant {
                    lambda,
                    ..Variant::penalty(settings)
                },
            })
            .collect(),
        AblationFactor::Divergence => a
            .divergences
            .iter()
            .map(|&divergence| Sweep {
                label: divergence.name().to_string(),
                lambda_column: Some(settings.lambda),
                variant: Variant {
                    divergence,
                    ..Variant::penalty(settings)
                },
            })
            .collect(),
        AblationFactor::Activation => a
            .activations
            .iter()
            .map(|&head| Sweep {
                label: head.name().to_string(),
                lambda_column: Some(settings.lambda),
                variant: Variant {
                    head,
                    ..Variant::penalty(settings)
                },
            })
            .collect(),
        AblationFactor::Penalty => vec![
            Sweep {
                label: "penalty-on".to_string(),
                lambda_column: Some(settings.lambda),
                variant: Variant::penalty(settings),
            },
            Sweep {
                label: "penalty-off".to_string(),
                lambda_column: Some(0.0),
                variant: Variant {
                    lambda: 0.0,
                    ..Variant::penalty(settings)
                },
            },
        ],
    }
}

fn dataset_mean_tau(output: &TrainOutput<f64>, data: &TransitionDataset<f64>) -> gendice::Result<f64> {
    let tau = ratio_table(&output.params);
    let weights = data.state_action_dist()?;
    Ok(tau
        .iter()
        .enumerate()
        .map(|(pair, &t)| weights.get(pair) * t)
        .sum())
}

fn row(
    sweep: &Sweep,
    settings: &GenDiceSettings,
    seed: u64,
    size: usize,
    metric: &str,
    value: MetricValue,
) -> MetricRecord {
    MetricRecord {
        task: "ablate",
        method: sweep.label.clone(),
        seed: Some(seed),
        n_samples: Some(size),
        alpha: None,
        gamma: Some(settings.gamma),
        lambda: sweep.lambda_column,
        metric: metric.to_string(),
        value,
    }
}

pub fn run(config: &Config) -> RunResult<RunOutput> {
    let fixed = load_fixed_graph(config)?;
    // One walk length per cell: the first (typically only) entry of the
    // sample sweep.
    let size = config.samples.sizes[0];
    let settings = &config.gendice;
    let sweeps = cells(config);

    let results = parallel_seeds(config.experiment.seeds, config.experiment.jobs, |seed| {
        let env = seed_environment(config, fixed.as_ref(), seed)?;
        let data = random_walk_dataset(&env.chain, size, stream_seed(&[seed, 1, 0]))
            .map_err(|e| fatal("random walk", e))?;
        let mut rows = Vec::with_capacity(sweeps.len() * 2);
        for sweep in &sweeps {
            let trained = train_once(settings, &sweep.variant, &data, seed, 0);
            let (kl, mean_tau) = match trained {
                Err(_) => (MetricValue::Divergent, MetricValue::Divergent),
                Ok(output) => {
                    let mean = match dataset_mean_tau(&output, &data) {
                        Ok(mean) => MetricValue::Finite(mean),
                        Err(_) => MetricValue::Divergent,
                    };
                    let kl = match corrected_distribution(&output, &data) {
                        Ok(est) => MetricValue::Finite(log_kl(&est, &env.truth)),
                        Err(_) => MetricValue::Divergent,
                    };
                    (kl, mean)
                }
            };
            rows.push(row(sweep, settings, seed, size, "log-kl", kl));
            rows.push(row(sweep, settings, seed, size, "tau-mean", mean_tau));
        }
        Ok(rows)
    });

    let mut output = RunOutput::default();
    for result in results {
        output.records.extend(result?);
    }
    let aggregates = aggregate(&output.records);
    output.records.extend(aggregates);
    Ok(output)
}

/// The divergences swept by default, in the order the defaults list them.
pub fn default_divergences() -> [FDivergence; 3] {
    [FDivergence::ChiSquared, FDivergence::Js, FDivergence::Kl]
}
