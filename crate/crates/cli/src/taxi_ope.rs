//! Off-policy evaluation on the gridworld taxi: train an evaluation policy
//! and a weaker snapshot once, collect trajectories from mixtures of the
//! two, and estimate the evaluation policy's per-step value from the logged
//! data with the ratio estimator, the fitted model, and step-wise weighted
//! importance sampling. Estimates are scored against the exact value from
//! the true dynamics.

use gendice::baselines::{behavior_clone, fit_model, model_based_value, wis_estimate};
use gendice::exact::{
    estimate_policy_value, exact_ratio_solve, policy_weighted_chain, tau_records_weighted,
};
use gendice::markov::{q_learning_snapshots, QLearningConfig};
use gendice::taxi::{taxi_mdp, TaxiConfig};
use gendice::{Policy, TabularMdp, TransitionDataset};

use crate::config::Config;
use crate::metrics::{aggregate, log_mse, MetricRecord, MetricValue};
use crate::runner::{fatal, parallel_seeds, stream_seed, RunOutput, RunResult};

/// Exact per-step value of a policy on the true dynamics: the reward
/// expectation under the (discounted) occupancy of the induced chain.
fn oracle_value(mdp: &TabularMdp<f64>, policy: &Policy<f64>, gamma: f64) -> RunResult<f64> {
    let chain = mdp
        .induced_chain(policy)
        .map_err(|e| fatal("oracle chain", e))?;
    let mu0 = chain.mu0().clone();
    let occupancy = chain
        .stationary(gamma, &mu0, 1e-11, 500_000)
        .map_err(|e| fatal("oracle occupancy", e))?;
    let n_actions = mdp.n_actions();
    Ok((0..mdp.n_states() * n_actions)
        .map(|pair| occupancy.get(pair) * mdp.reward(pair / n_actions, pair % n_actions))
        .sum())
}

fn ratio_estimate(
    data: &TransitionDataset<f64>,
    target: &Policy<f64>,
    cloned: &Policy<f64>,
    gamma: f64,
) -> gendice::Result<f64> {
    let emp = policy_weighted_chain(data, target, cloned)?;
    let mu0 = emp.chain.mu0().clone();
    let tau = exact_ratio_solve(&emp.chain, &emp.sampling, gamma, &mu0)?;
    let per_record = tau_records_weighted(&tau, data, target, cloned)?;
    estimate_policy_value(&per_record, data)
}

fn cell(result: gendice::Result<f64>) -> MetricValue {
    match result {
        Ok(v) if v.is_finite() => MetricValue::Finite(v),
        _ => MetricValue::Divergent,
    }
}

struct Cell {
    method: &'static str,
    alpha: f64,
    gamma: f64,
    length: usize,
    value: MetricValue,
}

fn record_of(seed: Option<u64>, cell: Cell, metric: &str, lambda: Option<f64>) -> MetricRecord {
    MetricRecord {
        task: "ope-taxi",
        method: cell.method.to_string(),
        seed,
        n_samples: Some(cell.length),
        alpha: Some(cell.alpha),
        gamma: Some(cell.gamma),
        lambda,
        metric: metric.to_string(),
        value: cell.value,
    }
}

pub fn run(config: &Config) -> RunResult<RunOutput> {
    let t = &config.taxi;
    let mdp = taxi_mdp(&TaxiConfig {
        grid: t.grid,
        arrival_prob: t.arrival_prob,
        dropoff_reward: t.dropoff_reward,
        destination: t.destination,
        gamma: 1.0,
    })
    .map_err(|e| crate::runner::RunError::Config(format!("taxi board: {e}")))?;

    // The evaluation policy and the weaker mixture base are trained once and
    // shared by every seed; only the logged data varies.
    let q_config = QLearningConfig {
        episodes: t.q_episodes,
        steps_per_episode: t.q_steps,
        learning_rate: t.q_lr,
        epsilon: t.q_epsilon,
        epsilon_final: t.q_epsilon_final,
        soften: t.q_soften,
    };
    let (_, snapshots) =
        q_learning_snapshots(&mdp, &q_config, t.q_seed, &[t.base_episodes, t.q_episodes]);
    let [base, target]: [Policy<f64>; 2] = snapshots
        .try_into()
        .expect("two checkpoints requested");

    let mut oracle = Vec::with_capacity(t.gammas.len());
    let mut records = Vec::new();
    for &gamma in &t.gammas {
        let rho = oracle_value(&mdp, &target, gamma)?;
        oracle.push(rho);
        records.push(MetricRecord {
            task: "ope-taxi",
            method: "oracle".to_string(),
            seed: None,
            n_samples: None,
            alpha: None,
            gamma: Some(gamma),
            lambda: None,
            metric: "rho".to_string(),
            value: MetricValue::Finite(rho),
        });
    }

    let behaviors: Vec<Policy<f64>> = t
        .alphas
        .iter()
        .map(|&alpha| base.mix(&target, alpha))
        .collect::<gendice::Result<_>>()
        .map_err(|e| fatal("behavior mixture", e))?;

    let smoothing = config.baselines.smoothing;
    let results = parallel_seeds(config.experiment.seeds, config.experiment.jobs, |seed| {
        let mut rows: Vec<Cell> = Vec::new();
        for (alpha_index, &alpha) in t.alphas.iter().enumerate() {
            let behavior = &behaviors[alpha_index];
            for (length_index, &length) in t.lengths.iter().enumerate() {
                let data = mdp
                    .sample_trajectories(
                        behavior,
                        t.n_trajectories,
                        length,
                        stream_seed(&[seed, alpha_index as u64, length_index as u64]),
                    )
                    .map_err(|e| fatal("trajectory collection", e))?;
                let cloned = behavior_clone(&data).map_err(|e| fatal("behavior cloning", e))?;
                let model = fit_model(&data, smoothing).map_err(|e| fatal("count model", e))?;
                for &gamma in &t.gammas {
                    rows.push(Cell {
                        method: "gendice",
                        alpha,
                        gamma,
                        length,
                        value: cell(ratio_estimate(&data, &target, &cloned, gamma)),
                    });
                    if config.baselines.model_based {
                        rows.push(Cell {
                            method: "model-based",
                            alpha,
                            gamma,
                            length,
                            value: cell(model_based_value(
                                &model,
                                &target,
                                gamma,
                                mdp.mu0(),
                                1e-11,
                                500_000,
                            )),
                        });
                    }
                    if config.baselines.wis {
                        rows.push(Cell {
                            method: "wis",
                            alpha,
                            gamma,
                            length,
                            value: cell(wis_estimate(&data, &target, &cloned, gamma)),
                        });
                    }
                }
            }
        }
        Ok(rows)
    });

    let mut seed_rows: Vec<MetricRecord> = Vec::new();
    for (seed, result) in results.into_iter().enumerate() {
        for cell in result? {
            seed_rows.push(record_of(Some(seed as u64), cell, "rho-hat", None));
        }
    }

    // Squared-error summaries against the oracle, one per cell.
    let mut mse_rows: Vec<MetricRecord> = Vec::new();
    {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(String, usize, u64, u64), Vec<f64>> = BTreeMap::new();
        let mut order = Vec::new();
        for row in &seed_rows {
            let key = (
                row.method.clone(),
                row.n_samples.unwrap_or(0),
                row.alpha.unwrap_or(0.0).to_bits(),
                row.gamma.unwrap_or(0.0).to_bits(),
            );
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            let list = groups.entry(key).or_default();
            if let Some(v) = row.value.finite() {
                list.push(v);
            }
        }
        for key in order {
            let (method, length, alpha_bits, gamma_bits) = key.clone();
            let gamma = f64::from_bits(gamma_bits);
            let rho = t
                .gammas
                .iter()
                .position(|&g| g == gamma)
                .map(|i| oracle[i])
                .expect("gamma came from the sweep list");
            let estimates = &groups[&key];
            let value = if estimates.is_empty() {
                MetricValue::Divergent
            } else {
                MetricValue::Finite(log_mse(estimates, rho))
            };
            mse_rows.push(MetricRecord {
                task: "ope-taxi",
                method,
                seed: None,
                n_samples: Some(length),
                alpha: Some(f64::from_bits(alpha_bits)),
                gamma: Some(gamma),
                lambda: None,
                metric: "log-mse".to_string(),
                value,
            });
        }
    }

    let aggregates = aggregate(&seed_rows);
    records.extend(seed_rows);
    records.extend(mse_rows);
    records.extend(aggregates);
    Ok(RunOutput {
        records,
        traces: Vec::new(),
        tables: Vec::new(),
    })
}
