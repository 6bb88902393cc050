//! Reference estimators the ratio method is compared against: a smoothed
//! maximum likelihood model of the dynamics, behavior cloning, and
//! step-normalized weighted importance sampling.

use num_traits::Float;

use crate::error::{Error, Result};
use crate::markov::{Distribution, Policy, TabularMdp, TransitionDataset};
use crate::scalar::Scalar;

/// Smoothed tabular model of transitions and rewards fit by counting.
///
/// Each state-action row mixes the empirical successor distribution with the
/// uniform one: `P(s2 | s, a) = (1 - mix) emp(s2) + mix / n` where
/// `mix = smoothing * n / (count + smoothing * n)`, so unvisited pairs fall
/// back to uniform entirely and heavily visited ones to their counts.
#[derive(Debug, Clone)]
pub struct EmpiricalModel<S: Scalar> {
    n_states: usize,
    n_actions: usize,
    rows: Vec<ModelRow<S>>,
    rewards: Vec<S>,
    visits: Vec<u64>,
}

#[derive(Debug, Clone)]
struct ModelRow<S> {
    /// Normalized successor frequencies, sorted by state index.
    entries: Vec<(usize, S)>,
    /// Uniform mixture weight in [0, 1].
    mix: S,
}

impl<S: Scalar> EmpiricalModel<S> {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn visits(&self, state: usize, action: usize) -> u64 {
        self.visits[state * self.n_actions + action]
    }

    /// Mean observed reward, zero for unvisited pairs.
    pub fn reward(&self, state: usize, action: usize) -> S {
        self.rewards[state * self.n_actions + action]
    }

    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> S {
        let row = &self.rows[state * self.n_actions + action];
        let uniform = row.mix / S::of(self.n_states as f64);
        let emp = row
            .entries
            .iter()
            .find(|(x, _)| *x == next)
            .map_or(S::zero(), |&(_, p)| p);
        uniform + (S::one() - row.mix) * emp
    }

    /// Materializes the smoothed model as an explicit tabular process. Rows
    /// with a uniform component become dense, so this is for small spaces.
    pub fn to_mdp(&self, mu0: Distribution<S>, gamma: S) -> Result<TabularMdp<S>> {
        let n = self.n_states;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                if row.mix == S::zero() {
                    row.entries.clone()
                } else {
                    let uniform = row.mix / S::of(n as f64);
                    let mut dense = vec![uniform; n];
                    for &(x, p) in &row.entries {
                        dense[x] = dense[x] + (S::one() - row.mix) * p;
                    }
                    dense.into_iter().enumerate().collect()
                }
            })
            .collect();
        TabularMdp::from_sparse(n, self.n_actions, rows, self.rewards.clone(), mu0, gamma)
    }
}

/// Fits the smoothed count model. `smoothing` is the pseudo-count per
/// successor state; zero gives the raw maximum likelihood model.
pub fn fit_model<S: Scalar>(
    dataset: &TransitionDataset<S>,
    smoothing: S,
) -> Result<EmpiricalModel<S>> {
    if smoothing < S::zero() || !smoothing.is_finite() {
        return Err(Error::InvalidArgument {
            what: "smoothing",
            requirement: "nonnegative and finite",
            value: smoothing.to_f64(),
        });
    }
    if dataset.records().is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.n_states();
    let n_a = dataset.n_actions();
    let n_pairs = n * n_a;
    let mut succ: Vec<Vec<(usize, S)>> = vec![Vec::new(); n_pairs];
    let mut reward_sum = vec![S::zero(); n_pairs];
    for r in dataset.records() {
        let pair = r.state * n_a + r.action;
        reward_sum[pair] = reward_sum[pair] + r.reward;
        match succ[pair].iter_mut().find(|(x, _)| *x == r.next_state) {
            Some(entry) => entry.1 = entry.1 + S::one(),
            None => succ[pair].push((r.next_state, S::one())),
        }
    }
    let visits = dataset.sa_counts().to_vec();
    let pseudo = smoothing * S::of(n as f64);
    let mut rows = Vec::with_capacity(n_pairs);
    let mut rewards = Vec::with_capacity(n_pairs);
    for (pair, mut entries) in succ.into_iter().enumerate() {
        let count = S::of(visits[pair] as f64);
        let mix = if visits[pair] == 0 {
            S::one()
        } else {
            pseudo / (count + pseudo)
        };
        entries.sort_unstable_by_key(|&(x, _)| x);
        for e in &mut entries {
            e.1 = e.1 / count;
        }
        rows.push(ModelRow { entries, mix });
        rewards.push(if visits[pair] == 0 {
            S::zero()
        } else {
            reward_sum[pair] / count
        });
    }
    Ok(EmpiricalModel {
        n_states: n,
        n_actions: n_a,
        rows,
        rewards,
        visits,
    })
}

/// Average reward of `policy` under the model's own occupancy, found by
/// iterating the state occupancy equation to `tol` (L1, scaled by `1 - gamma`
/// when discounting).
///
/// `gamma = 1` runs plain fixed-point iteration followed by running-average
/// smoothing for chains that oscillate.
pub fn model_based_value<S: Scalar>(
    model: &EmpiricalModel<S>,
    policy: &Policy<S>,
    gamma: S,
    mu0: &Distribution<S>,
    tol: S,
    max_iter: usize,
) -> Result<S> {
    let n = model.n_states;
    if policy.n_states() != n || policy.n_actions() != model.n_actions {
        return Err(Error::DimensionMismatch {
            context: format!(
                "policy is {}x{}, model is {}x{}",
                policy.n_states(),
                policy.n_actions(),
                n,
                model.n_actions
            ),
        });
    }
    if mu0.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!("mu0 has {} states, model has {n}", mu0.len()),
        });
    }
    let gamma_f = gamma.to_f64();
    if !(0.0..=1.0).contains(&gamma_f) || !gamma_f.is_finite() {
        return Err(Error::InvalidArgument {
            what: "gamma",
            requirement: "in [0, 1]",
            value: gamma_f,
        });
    }

    // One application of the policy-induced state transition operator. The
    // uniform components of all rows collapse into a single rank-one term.
    let apply = |d: &[S], out: &mut [S]| {
        out.iter_mut().for_each(|v| *v = S::zero());
        let mut fallback = S::zero();
        for s in 0..n {
            if d[s] == S::zero() {
                continue;
            }
            for a in 0..model.n_actions {
                let w = d[s] * policy.prob(s, a);
                if w == S::zero() {
                    continue;
                }
                let row = &model.rows[s * model.n_actions + a];
                fallback = fallback + w * row.mix;
                let keep = S::one() - row.mix;
                if keep > S::zero() {
                    for &(x, p) in &row.entries {
                        out[x] = out[x] + w * keep * p;
                    }
                }
            }
        }
        let spread = fallback / S::of(n as f64);
        if spread > S::zero() {
            for v in out.iter_mut() {
                *v = *v + spread;
            }
        }
    };

    let mut d: Vec<S> = mu0.probs().to_vec();
    let mut next = vec![S::zero(); n];
    if gamma > S::zero() {
        let one_minus = S::one() - gamma;
        let stop = if gamma < S::one() { tol * one_minus } else { tol };
        let mut converged = false;
        let mut diff = S::infinity();
        for _ in 0..max_iter {
            apply(&d, &mut next);
            for (v, &m0) in next.iter_mut().zip(mu0.probs()) {
                *v = one_minus * m0 + gamma * *v;
            }
            diff = d
                .iter()
                .zip(&next)
                .map(|(a, b)| Float::abs(*a - *b))
                .sum();
            std::mem::swap(&mut d, &mut next);
            if diff <= stop {
                converged = true;
                break;
            }
        }
        if !converged && gamma == S::one() {
            // Oscillating chain: average the iterates and test every block.
            let mut avg = d.clone();
            let mut count = S::one();
            for it in 0..max_iter {
                apply(&d, &mut next);
                std::mem::swap(&mut d, &mut next);
                count = count + S::one();
                let w_new = S::one() / count;
                let w_old = S::one() - w_new;
                for (a, &x) in avg.iter_mut().zip(d.iter()) {
                    *a = w_old * *a + w_new * x;
                }
                if it % 128 == 0 {
                    apply(&avg, &mut next);
                    diff = avg
                        .iter()
                        .zip(&next)
                        .map(|(a, b)| Float::abs(*a - *b))
                        .sum();
                    if diff <= stop {
                        d.copy_from_slice(&avg);
                        converged = true;
                        break;
                    }
                }
            }
            if converged {
                let total: S = d.iter().copied().sum();
                for v in &mut d {
                    *v = *v / total;
                }
            }
        }
        if !converged {
            return Err(Error::NoConvergence {
                iters: max_iter,
                residual: diff.to_f64(),
            });
        }
    }

    let mut value = S::zero();
    for s in 0..n {
        if d[s] == S::zero() {
            continue;
        }
        for a in 0..model.n_actions {
            value = value + d[s] * policy.prob(s, a) * model.reward(s, a);
        }
    }
    Ok(value)
}

/// Maximum likelihood estimate of the policy that produced the dataset;
/// unvisited states get uniform rows.
pub fn behavior_clone<S: Scalar>(dataset: &TransitionDataset<S>) -> Result<Policy<S>> {
    if dataset.records().is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = dataset.n_states();
    let n_a = dataset.n_actions();
    let uniform = S::one() / S::of(n_a as f64);
    let mut probs = Vec::with_capacity(n * n_a);
    for s in 0..n {
        let total = S::of(dataset.state_counts()[s] as f64);
        for a in 0..n_a {
            if total > S::zero() {
                probs.push(S::of(dataset.sa_counts()[s * n_a + a] as f64) / total);
            } else {
                probs.push(uniform);
            }
        }
    }
    Policy::new(n, n_a, probs)
}

/// Weighted importance sampling with per-step normalization.
///
/// Trajectory `j` carries cumulative weight `w_j(t) = prod_{u <= t}
/// target(a | s) / behavior(a | s)`; step `t` contributes the `w(t)`-weighted
/// average reward across trajectories, and steps combine with weights
/// proportional to `gamma^t`. Requires the fixed-horizon layout.
pub fn wis_estimate<S: Scalar>(
    dataset: &TransitionDataset<S>,
    target: &Policy<S>,
    behavior: &Policy<S>,
    gamma: S,
) -> Result<S> {
    let h = dataset.horizon().ok_or(Error::MissingTrajectoryStructure)?;
    let records = dataset.records();
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for policy in [target, behavior] {
        if policy.n_states() != dataset.n_states() || policy.n_actions() != dataset.n_actions() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "policy is {}x{}, dataset is {}x{}",
                    policy.n_states(),
                    policy.n_actions(),
                    dataset.n_states(),
                    dataset.n_actions()
                ),
            });
        }
    }
    let gamma_f = gamma.to_f64();
    if !(0.0..=1.0).contains(&gamma_f) || !gamma_f.is_finite() {
        return Err(Error::InvalidArgument {
            what: "gamma",
            requirement: "in [0, 1]",
            value: gamma_f,
        });
    }

    let n_traj = records.len() / h;
    // Cumulative log weights; zero target probability pins a trajectory's
    // weight at exactly zero from that step on.
    let mut log_w = vec![S::zero(); n_traj];
    let mut acc_num = S::zero();
    let mut acc_den = S::zero();
    let mut step_scale = S::one();
    for t in 0..h {
        for (j, lw) in log_w.iter_mut().enumerate() {
            let r = &records[j * h + t];
            let b = behavior.prob(r.state, r.action);
            if b <= S::zero() {
                return Err(Error::ZeroBehaviorProbability {
                    record: j * h + t,
                    state: r.state,
                    action: r.action,
                });
            }
            let p = target.prob(r.state, r.action);
            *lw = if p > S::zero() {
                *lw + Float::ln(p / b)
            } else {
                S::neg_infinity()
            };
        }
        let max_lw = log_w
            .iter()
            .copied()
            .fold(S::neg_infinity(), |a, b| Float::max(a, b));
        if max_lw > S::neg_infinity() {
            let mut num = S::zero();
            let mut den = S::zero();
            for (j, &lw) in log_w.iter().enumerate() {
                let w = Float::exp(lw - max_lw);
                num = num + w * records[j * h + t].reward;
                den = den + w;
            }
            acc_num = acc_num + step_scale * num / den;
            acc_den = acc_den + step_scale;
        }
        step_scale = step_scale * gamma;
        if step_scale == S::zero() {
            break;
        }
    }
    if acc_den <= S::zero() {
        // Target policy puts zero probability on every observed trajectory.
        return Err(Error::NonPositiveMean { mean: 0.0 });
    }
    Ok(acc_num / acc_den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::Transition;

    fn record(s: usize, a: usize, r: f64, s2: usize) -> Transition<f64> {
        Transition {
            state: s,
            action: a,
            reward: r,
            next_state: s2,
        }
    }

    fn flip_dataset() -> TransitionDataset<f64> {
        // Deterministic two-state flip observed from both states and actions.
        let records = vec![
            record(0, 0, 1.0, 1),
            record(1, 0, 0.0, 0),
            record(0, 1, 0.5, 1),
            record(1, 1, 0.0, 0),
            record(0, 0, 1.0, 1),
            record(1, 0, 0.0, 0),
        ];
        TransitionDataset::new(2, 2, records, vec![0], None).unwrap()
    }

    #[test]
    fn model_counts_transitions_and_rewards() {
        let records = vec![
            record(0, 0, 1.0, 1),
            record(0, 0, 1.0, 1),
            record(0, 0, 0.0, 0),
            record(1, 0, 2.0, 0),
        ];
        let data = TransitionDataset::new(2, 1, records, vec![0], None).unwrap();
        let model = fit_model(&data, 0.0).unwrap();
        assert_eq!(model.visits(0, 0), 3);
        assert!((model.transition_prob(0, 0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((model.transition_prob(0, 0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((model.reward(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(model.transition_prob(1, 0, 0), 1.0);
        assert_eq!(model.reward(1, 0), 2.0);
    }

    #[test]
    fn smoothing_pulls_rows_toward_uniform() {
        let records = vec![record(0, 0, 0.0, 1)];
        let data = TransitionDataset::new(2, 1, records, vec![0], None).unwrap();
        // One observation, pseudo-count 1 per successor: mix = 2/3.
        let model = fit_model(&data, 1.0).unwrap();
        let mix = 2.0 / 3.0;
        assert!((model.transition_prob(0, 0, 1) - (mix / 2.0 + (1.0 - mix))).abs() < 1e-15);
        assert!((model.transition_prob(0, 0, 0) - mix / 2.0).abs() < 1e-15);
        // Unvisited pair falls back to uniform regardless of smoothing.
        assert_eq!(model.transition_prob(1, 0, 0), 0.5);
        assert_eq!(model.transition_prob(1, 0, 1), 0.5);
        assert_eq!(model.reward(1, 0), 0.0);
    }

    #[test]
    fn rejects_negative_smoothing_and_empty_data() {
        let data = flip_dataset();
        assert!(matches!(
            fit_model(&data, -0.1).unwrap_err(),
            Error::InvalidArgument { .. }
        ));
        let empty = TransitionDataset::<f64>::new(2, 1, vec![], vec![], None).unwrap();
        assert!(matches!(fit_model(&empty, 0.0).unwrap_err(), Error::EmptyDataset));
    }

    #[test]
    fn value_of_deterministic_flip_is_half_the_flip_reward() {
        // Under action 0 the chain alternates 0 -> 1 -> 0 with reward 1 from
        // state 0 only; the stationary average is 1/2.
        let model = fit_model(&flip_dataset(), 0.0).unwrap();
        let policy = Policy::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let v = model_based_value(
            &model,
            &policy,
            1.0,
            &Distribution::uniform(2),
            1e-12,
            10_000,
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-10, "value {v}");
    }

    #[test]
    fn discounted_value_matches_explicit_mdp_route() {
        let model = fit_model(&flip_dataset(), 0.5).unwrap();
        let policy = Policy::new(2, 2, vec![0.7, 0.3, 0.4, 0.6]).unwrap();
        let mu0 = Distribution::new(vec![1.0, 0.0]).unwrap();
        let gamma = 0.9;
        let direct = model_based_value(&model, &policy, gamma, &mu0, 1e-13, 100_000).unwrap();

        // Independent route: materialize the model, induce the state-action
        // chain, and accumulate the occupancy-weighted rewards.
        let mdp = model.to_mdp(mu0, gamma).unwrap();
        let chain = mdp.induced_chain(&policy).unwrap();
        let d = chain
            .stationary(gamma, &chain.mu0().clone(), 1e-13, 100_000)
            .unwrap();
        let mut expect = 0.0;
        for s in 0..2 {
            for a in 0..2 {
                expect += d.get(s * 2 + a) * model.reward(s, a);
            }
        }
        assert!((direct - expect).abs() < 1e-9, "{direct} vs {expect}");
    }

    #[test]
    fn gamma_zero_value_reads_initial_rewards() {
        let model = fit_model(&flip_dataset(), 0.0).unwrap();
        let policy = Policy::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let mu0 = Distribution::new(vec![1.0, 0.0]).unwrap();
        let v = model_based_value(&model, &policy, 0.0, &mu0, 1e-12, 10).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cloned_behavior_matches_action_frequencies() {
        let records = vec![
            record(0, 0, 0.0, 0),
            record(0, 0, 0.0, 0),
            record(0, 1, 0.0, 0),
            record(1, 1, 0.0, 1),
        ];
        let data = TransitionDataset::new(3, 2, records, vec![0], None).unwrap();
        let cloned = behavior_clone(&data).unwrap();
        assert!((cloned.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cloned.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cloned.prob(1, 1), 1.0);
        // State 2 never appears; fall back to uniform.
        assert_eq!(cloned.prob(2, 0), 0.5);
    }

    #[test]
    fn wis_with_matched_policies_averages_rewards() {
        let records = vec![
            record(0, 0, 1.0, 1),
            record(1, 0, 3.0, 0),
            record(0, 1, 2.0, 1),
            record(1, 1, 0.0, 0),
        ];
        let data = TransitionDataset::new(2, 2, records, vec![0, 0], Some(2)).unwrap();
        let uniform = Policy::uniform(2, 2);
        // Identical policies: every weight is 1, so each step averages its
        // rewards and gamma mixes the steps.
        let v1 = wis_estimate(&data, &uniform, &uniform, 1.0).unwrap();
        assert!((v1 - (1.5 + 1.5) / 2.0).abs() < 1e-15);
        let gamma = 0.5;
        let expect = (1.5 + gamma * 1.5) / (1.0 + gamma);
        let v2 = wis_estimate(&data, &uniform, &uniform, gamma).unwrap();
        assert!((v2 - expect).abs() < 1e-15);
    }

    #[test]
    fn wis_reweights_trajectories_by_target_ratio() {
        let records = vec![record(0, 0, 1.0, 0), record(0, 1, 0.0, 0)];
        let data = TransitionDataset::new(1, 2, records, vec![0, 0], Some(1)).unwrap();
        let behavior = Policy::uniform(1, 2);
        let target = Policy::new(1, 2, vec![0.8, 0.2]).unwrap();
        // Weights 1.6 and 0.4: estimate = 1.6 / 2.0.
        let v = wis_estimate(&data, &target, &behavior, 1.0).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn wis_drops_trajectories_the_target_never_takes() {
        let records = vec![record(0, 0, 1.0, 0), record(0, 1, 0.0, 0)];
        let data = TransitionDataset::new(1, 2, records, vec![0, 0], Some(1)).unwrap();
        let behavior = Policy::uniform(1, 2);
        let target = Policy::new(1, 2, vec![1.0, 0.0]).unwrap();
        let v = wis_estimate(&data, &target, &behavior, 1.0).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn wis_requires_trajectory_structure_and_supported_behavior() {
        let records = vec![record(0, 0, 1.0, 0)];
        let flat = TransitionDataset::new(1, 2, records.clone(), vec![0], None).unwrap();
        let uniform = Policy::uniform(1, 2);
        assert!(matches!(
            wis_estimate(&flat, &uniform, &uniform, 1.0).unwrap_err(),
            Error::MissingTrajectoryStructure
        ));

        let shaped = TransitionDataset::new(1, 2, records, vec![0], Some(1)).unwrap();
        let degenerate = Policy::new(1, 2, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            wis_estimate(&shaped, &uniform, &degenerate, 1.0).unwrap_err(),
            Error::ZeroBehaviorProbability { record: 0, .. }
        ));
        // Target avoids every observed action: nothing to normalize.
        assert!(matches!(
            wis_estimate(&shaped, &degenerate, &uniform, 1.0).unwrap_err(),
            Error::NonPositiveMean { .. }
        ));
    }
}
