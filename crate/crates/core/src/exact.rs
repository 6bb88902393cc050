//! Dense reference solvers for the stationary ratio and the population
//! objective, plus builders that turn offline datasets into empirical chains
//! the solvers accept.
//!
//! The solver recovers `tau` with `tau(x) * p(x) = mu(x)` where `mu` solves
//! `mu = (1 - gamma) * mu0 + gamma * P^T mu` (the stationary distribution at
//! `gamma = 1`). It reduces the system to the support of `p`, so it demands
//! support consistency up front: any state reachable from the support with
//! `p = 0` makes the ratio infinite and is reported as an error rather than
//! silently clipped.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::markov::{Distribution, MarkovChain, Policy, Row, TransitionDataset};
use crate::scalar::Scalar;

/// Largest support size the dense solver accepts.
pub const DENSE_SOLVE_LIMIT: usize = 4096;

/// How many offending states a support error lists before truncating.
const ZERO_SUPPORT_LISTED: usize = 8;

fn validate_unit_interval(what: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) || !v.is_finite() {
        return Err(Error::InvalidArgument {
            what,
            requirement: "in [0, 1]",
            value: v,
        });
    }
    Ok(())
}

fn zero_support_error(violations: BTreeSet<usize>) -> Error {
    Error::ZeroSupport {
        states: violations.into_iter().take(ZERO_SUPPORT_LISTED).collect(),
    }
}

/// LU first, SVD least squares with a relative singular value cutoff as the
/// fallback for singular systems (multiple recurrent classes).
fn solve_dense<S: Scalar + nalgebra::RealField>(
    m: &DMatrix<S>,
    rhs: &DVector<S>,
) -> Option<DVector<S>> {
    if let Some(x) = m.clone().lu().solve(rhs) {
        return Some(x);
    }
    let svd = m.clone().svd(true, true);
    let max_sv = svd
        .singular_values
        .iter()
        .copied()
        .fold(S::zero(), |a, b| if b > a { b } else { a });
    let eps = Float::max(max_sv * S::of(1e-12), S::of(f64::MIN_POSITIVE));
    svd.solve(rhs, eps).ok()
}

/// Solves for the ratio `tau = mu / p` on the support of `p`.
///
/// `gamma = 0` returns `mu0_term / p` directly. `gamma = 1` solves the
/// stationary equations with the normalization `sum_x p(x) tau(x) = 1` in
/// place of one redundant row; `mu0_term` is ignored there. Off-support
/// entries of the returned vector are zero.
///
/// The support check is conservative: an edge from a supported state into an
/// unsupported one is rejected even if the solution would put no mass on its
/// source. Builders in this module drop such records, so chains they produce
/// always pass.
pub fn exact_ratio_solve<S: Scalar + nalgebra::RealField>(
    chain: &MarkovChain<S>,
    p: &Distribution<S>,
    gamma: S,
    mu0_term: &Distribution<S>,
) -> Result<Vec<S>> {
    let n = chain.n_states();
    if p.len() != n || mu0_term.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "chain has {n} states, p has {}, mu0 has {}",
                p.len(),
                mu0_term.len()
            ),
        });
    }
    validate_unit_interval("gamma", gamma.to_f64())?;

    if gamma == S::zero() {
        let mut violations = BTreeSet::new();
        let mut tau = vec![S::zero(); n];
        for x in 0..n {
            if p.get(x) > S::zero() {
                tau[x] = mu0_term.get(x) / p.get(x);
            } else if mu0_term.get(x) > S::zero() {
                violations.insert(x);
            }
        }
        if !violations.is_empty() {
            return Err(zero_support_error(violations));
        }
        return Ok(tau);
    }

    let support: Vec<usize> = (0..n).filter(|&x| p.get(x) > S::zero()).collect();
    let k = support.len();
    if k == 0 {
        return Err(Error::EmptyDataset);
    }
    if k > DENSE_SOLVE_LIMIT {
        return Err(Error::TooLargeForDenseSolve {
            n: k,
            limit: DENSE_SOLVE_LIMIT,
        });
    }
    let mut idx_of: Vec<Option<usize>> = vec![None; n];
    for (xi, &x) in support.iter().enumerate() {
        idx_of[x] = Some(xi);
    }

    let teleport = chain.teleport();
    let keep = S::one() - teleport;
    let mut violations = BTreeSet::new();
    if teleport > S::zero() && k < n {
        violations.extend((0..n).filter(|&x| idx_of[x].is_none()));
    }
    for &y in &support {
        match &chain.rows()[y] {
            Row::Uniform => {
                if k < n {
                    violations.extend((0..n).filter(|&x| idx_of[x].is_none()));
                }
            }
            Row::Entries(entries) => {
                for &(x, pr) in entries {
                    if keep * pr > S::zero() && idx_of[x].is_none() {
                        violations.insert(x);
                    }
                }
            }
        }
        if violations.len() >= ZERO_SUPPORT_LISTED {
            break;
        }
    }
    if gamma < S::one() {
        for x in 0..n {
            if mu0_term.get(x) > S::zero() && idx_of[x].is_none() {
                violations.insert(x);
            }
        }
    }
    if !violations.is_empty() {
        return Err(zero_support_error(violations));
    }

    // M[(x, y)] = delta(x, y) p(x) - gamma P(x | y) p(y) over the support, so
    // M tau = (1 - gamma) mu0 restates the evolution equation for mu = p tau.
    let mut m = DMatrix::<S>::zeros(k, k);
    let nf = S::of(n as f64);
    for (yi, &y) in support.iter().enumerate() {
        let py = p.get(y);
        match &chain.rows()[y] {
            Row::Uniform => {
                let w = gamma * (keep / nf) * py;
                for xi in 0..k {
                    m[(xi, yi)] -= w;
                }
            }
            Row::Entries(entries) => {
                for &(x, pr) in entries {
                    if let Some(xi) = idx_of[x] {
                        m[(xi, yi)] -= gamma * keep * pr * py;
                    }
                }
            }
        }
        if teleport > S::zero() {
            let w = gamma * (teleport / nf) * py;
            for xi in 0..k {
                m[(xi, yi)] -= w;
            }
        }
    }
    for (xi, &x) in support.iter().enumerate() {
        m[(xi, xi)] += p.get(x);
    }

    let tau_a = if gamma < S::one() {
        let one_minus = S::one() - gamma;
        let rhs = DVector::from_iterator(k, support.iter().map(|&x| one_minus * mu0_term.get(x)));
        solve_dense(&m, &rhs).ok_or(Error::NoConvergence {
            iters: 0,
            residual: f64::NAN,
        })?
    } else {
        // Columns of M sum to zero, so one row is redundant; replace the last
        // with the normalization constraint to pin the scale.
        let mut pinned = m.clone();
        let mut rhs = DVector::zeros(k);
        for (yi, &y) in support.iter().enumerate() {
            pinned[(k - 1, yi)] = p.get(y);
        }
        rhs[k - 1] = S::one();
        let sol = solve_dense(&pinned, &rhs).ok_or(Error::NoConvergence {
            iters: 0,
            residual: f64::NAN,
        })?;
        let resid = (&m * &sol).amax();
        let scale = Float::max(m.amax() * sol.amax(), S::of(f64::MIN_POSITIVE));
        if resid > S::of(1e-8) * scale {
            return Err(Error::NoConvergence {
                iters: 0,
                residual: (resid / scale).to_f64(),
            });
        }
        sol
    };

    let mut tau = vec![S::zero(); n];
    for (xi, &x) in support.iter().enumerate() {
        tau[x] = Float::max(tau_a[xi], S::zero());
    }
    if gamma == S::one() {
        let mass: S = support.iter().map(|&x| p.get(x) * tau[x]).sum();
        if mass <= S::zero() {
            return Err(Error::NonPositiveMean {
                mean: mass.to_f64(),
            });
        }
        for &x in &support {
            tau[x] = tau[x] / mass;
        }
    }
    Ok(tau)
}

/// Exact value of the objective the stochastic trainer estimates:
/// the divergence from the evolved candidate to the candidate itself plus the
/// quadratic normalization penalty.
///
/// With `d = p tau` and `q = (1 - gamma) mu0 + gamma P^T d`, returns
/// `sum_x d(x) phi(q(x) / d(x)) + lambda / 2 (sum_x d(x) - 1)^2`, infinite
/// when `q` puts mass where `d` has none.
pub fn population_objective<S: Scalar>(
    tau: &[S],
    chain: &MarkovChain<S>,
    p: &Distribution<S>,
    gamma: S,
    mu0_term: &Distribution<S>,
    divergence: FDivergence,
    lambda: S,
) -> Result<S> {
    let n = chain.n_states();
    if tau.len() != n || p.len() != n || mu0_term.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "chain has {n} states, tau has {}, p has {}, mu0 has {}",
                tau.len(),
                p.len(),
                mu0_term.len()
            ),
        });
    }
    validate_unit_interval("gamma", gamma.to_f64())?;
    if lambda < S::zero() || !lambda.is_finite() {
        return Err(Error::InvalidArgument {
            what: "lambda",
            requirement: "nonnegative and finite",
            value: lambda.to_f64(),
        });
    }

    let d: Vec<S> = (0..n).map(|x| p.get(x) * tau[x]).collect();
    let mut q = vec![S::zero(); n];
    chain.transpose_apply(&d, &mut q);
    let one_minus = S::one() - gamma;
    for x in 0..n {
        q[x] = one_minus * mu0_term.get(x) + gamma * q[x];
    }

    // Both d and q are sums of nonnegative terms, so exact zero tests are
    // meaningful here.
    let mut total = S::zero();
    for x in 0..n {
        if d[x] == S::zero() {
            if q[x] != S::zero() {
                return Ok(S::infinity());
            }
            continue;
        }
        total = total + d[x] * divergence.phi(q[x] / d[x])?;
    }
    let mass: S = d.iter().copied().sum();
    let gap = mass - S::one();
    Ok(total + lambda / S::of(2.0) * gap * gap)
}

/// Keeps only records whose `next_state` also occurs as the source of some
/// kept record, iterating until stable. Without this, a state observed only
/// as a final target would sit in the empirical chain's support with no
/// outgoing data, making the stationary equations infeasible.
fn consistent_mask<S: Scalar>(dataset: &TransitionDataset<S>, mut kept: Vec<bool>) -> Vec<bool> {
    let n = dataset.n_states();
    let records = dataset.records();
    let mut src_count = vec![0usize; n];
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, r) in records.iter().enumerate() {
        if kept[i] {
            src_count[r.state] += 1;
            incoming[r.next_state].push(i);
        }
    }
    let mut stale: Vec<usize> = (0..n).filter(|&s| src_count[s] == 0).collect();
    while let Some(s) = stale.pop() {
        for &i in &incoming[s] {
            if kept[i] {
                kept[i] = false;
                let src = records[i].state;
                src_count[src] -= 1;
                if src_count[src] == 0 {
                    stale.push(src);
                }
            }
        }
    }
    kept
}

/// State-level chain estimated from an offline dataset, together with the
/// empirical sampling distribution its ratio estimates are taken against.
#[derive(Debug, Clone)]
pub struct EmpiricalChain<S: Scalar> {
    pub chain: MarkovChain<S>,
    /// Empirical distribution of record source states (the `p` in `mu / p`).
    pub sampling: Distribution<S>,
    /// Initial state distribution restricted to visited sources, when the
    /// dataset recorded any initial states.
    pub initial: Option<Distribution<S>>,
    pub kept_records: usize,
    pub dropped_records: usize,
}

fn weighted_state_chain<S: Scalar>(
    dataset: &TransitionDataset<S>,
    weights: Option<&[S]>,
) -> Result<EmpiricalChain<S>> {
    let n = dataset.n_states();
    let records = dataset.records();
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(w) = weights {
        if w.len() != records.len() {
            return Err(Error::DimensionMismatch {
                context: format!("{} weights for {} records", w.len(), records.len()),
            });
        }
        for (i, &wi) in w.iter().enumerate() {
            if wi < S::zero() || !wi.is_finite() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: wi.to_f64(),
                });
            }
        }
    }
    let weight_of = |i: usize| weights.map_or(S::one(), |w| w[i]);
    let kept = consistent_mask(
        dataset,
        (0..records.len()).map(|i| weight_of(i) > S::zero()).collect(),
    );
    let kept_records = kept.iter().filter(|&&k| k).count();
    if kept_records == 0 {
        return Err(Error::EmptyDataset);
    }

    let mut src_weight = vec![S::zero(); n];
    let mut flow: Vec<Vec<(usize, S)>> = vec![Vec::new(); n];
    for (i, r) in records.iter().enumerate() {
        if !kept[i] {
            continue;
        }
        let w = weight_of(i);
        src_weight[r.state] = src_weight[r.state] + w;
        match flow[r.state].iter_mut().find(|(x, _)| *x == r.next_state) {
            Some(entry) => entry.1 = entry.1 + w,
            None => flow[r.state].push((r.next_state, w)),
        }
    }
    let rows: Vec<Row<S>> = (0..n)
        .map(|s| {
            if src_weight[s] > S::zero() {
                let mut entries = flow[s].clone();
                entries.sort_unstable_by_key(|&(x, _)| x);
                for e in &mut entries {
                    e.1 = e.1 / src_weight[s];
                }
                Row::Entries(entries)
            } else {
                // Unvisited source: a placeholder row the solver never uses,
                // since such states sit outside the sampling support.
                Row::Uniform
            }
        })
        .collect();

    let sampling = Distribution::from_weights(src_weight)?;
    let mut init_counts = vec![S::zero(); n];
    let mut init_total = S::zero();
    for &s in dataset.initial_states() {
        if sampling.get(s) > S::zero() {
            init_counts[s] = init_counts[s] + S::one();
            init_total = init_total + S::one();
        }
    }
    let initial = if init_total > S::zero() {
        Some(Distribution::from_weights(init_counts)?)
    } else {
        None
    };
    let mu0 = initial.clone().unwrap_or_else(|| sampling.clone());
    let chain = MarkovChain::with_teleport(n, rows, S::zero(), mu0, S::one())?;
    Ok(EmpiricalChain {
        chain,
        sampling,
        initial,
        kept_records,
        dropped_records: records.len() - kept_records,
    })
}

/// Maximum likelihood state chain of the data itself: row `s` is the
/// empirical distribution of successors observed from `s`.
pub fn empirical_chain<S: Scalar>(dataset: &TransitionDataset<S>) -> Result<EmpiricalChain<S>> {
    weighted_state_chain(dataset, None)
}

/// State chain the target policy would induce, estimated by reweighting each
/// record by `target(a | s) / behavior(a | s)`.
pub fn policy_weighted_chain<S: Scalar>(
    dataset: &TransitionDataset<S>,
    target: &Policy<S>,
    behavior: &Policy<S>,
) -> Result<EmpiricalChain<S>> {
    check_policy_dims(dataset, target)?;
    check_policy_dims(dataset, behavior)?;
    let weights = dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let b = behavior.prob(r.state, r.action);
            if b <= S::zero() {
                return Err(Error::ZeroBehaviorProbability {
                    record: i,
                    state: r.state,
                    action: r.action,
                });
            }
            Ok(target.prob(r.state, r.action) / b)
        })
        .collect::<Result<Vec<S>>>()?;
    weighted_state_chain(dataset, Some(&weights))
}

fn check_policy_dims<S: Scalar>(dataset: &TransitionDataset<S>, policy: &Policy<S>) -> Result<()> {
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
    Ok(())
}

/// Per-record ratios from a state-action ratio table indexed `s * n_a + a`.
pub fn tau_records_from_pairs<S: Scalar>(
    tau_pairs: &[S],
    dataset: &TransitionDataset<S>,
) -> Result<Vec<S>> {
    let expect = dataset.n_states() * dataset.n_actions();
    if tau_pairs.len() != expect {
        return Err(Error::DimensionMismatch {
            context: format!("{} ratios for {} state-action pairs", tau_pairs.len(), expect),
        });
    }
    let n_a = dataset.n_actions();
    Ok(dataset
        .records()
        .iter()
        .map(|r| tau_pairs[r.state * n_a + r.action])
        .collect())
}

/// Per-record ratios from a state-level ratio table, lifted to state-action
/// space by the policy ratio: `tau(s) target(a | s) / behavior(a | s)`.
pub fn tau_records_weighted<S: Scalar>(
    tau_states: &[S],
    dataset: &TransitionDataset<S>,
    target: &Policy<S>,
    behavior: &Policy<S>,
) -> Result<Vec<S>> {
    if tau_states.len() != dataset.n_states() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{} ratios for {} states",
                tau_states.len(),
                dataset.n_states()
            ),
        });
    }
    check_policy_dims(dataset, target)?;
    check_policy_dims(dataset, behavior)?;
    dataset
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let b = behavior.prob(r.state, r.action);
            if b <= S::zero() {
                return Err(Error::ZeroBehaviorProbability {
                    record: i,
                    state: r.state,
                    action: r.action,
                });
            }
            Ok(tau_states[r.state] * target.prob(r.state, r.action) / b)
        })
        .collect()
}

/// Ratio-weighted average reward: `mean_i tau_i r_i`.
pub fn estimate_policy_value<S: Scalar>(
    tau_records: &[S],
    dataset: &TransitionDataset<S>,
) -> Result<S> {
    let records = dataset.records();
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if tau_records.len() != records.len() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{} ratios for {} records",
                tau_records.len(),
                records.len()
            ),
        });
    }
    let total: S = tau_records
        .iter()
        .zip(records)
        .map(|(&t, r)| t * r.reward)
        .sum();
    Ok(total / S::of(records.len() as f64))
}

/// Stationary distribution estimate `p_hat(x) tau(x)`, renormalized; states
/// the data never visits get zero.
pub fn estimate_stationary<S: Scalar>(
    tau_states: &[S],
    dataset: &TransitionDataset<S>,
) -> Result<Vec<S>> {
    if tau_states.len() != dataset.n_states() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "{} ratios for {} states",
                tau_states.len(),
                dataset.n_states()
            ),
        });
    }
    let p_hat = dataset.state_dist()?;
    let mut d: Vec<S> = (0..dataset.n_states())
        .map(|x| p_hat.get(x) * tau_states[x])
        .collect();
    let total: S = d.iter().copied().sum();
    if total <= S::zero() {
        return Err(Error::NonPositiveMean {
            mean: total.to_f64(),
        });
    }
    for v in &mut d {
        *v = *v / total;
    }
    Ok(d)
}

/// Rescales `values` in place so their `weights`-average is one; returns the
/// mean it divided out.
pub fn self_normalize<S: Scalar>(values: &mut [S], weights: &Distribution<S>) -> Result<S> {
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: format!("{} values for {} weights", values.len(), weights.len()),
        });
    }
    let mean: S = values
        .iter()
        .enumerate()
        .map(|(x, &v)| weights.get(x) * v)
        .sum();
    if mean <= S::zero() || !mean.is_finite() {
        return Err(Error::NonPositiveMean {
            mean: mean.to_f64(),
        });
    }
    for v in values {
        *v = *v / mean;
    }
    Ok(mean)
}
