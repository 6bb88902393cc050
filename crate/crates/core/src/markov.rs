//! Tabular Markov chains and MDPs.
//!
//! Transition structure is stored row-sparse: a row is either an explicit
//! list of `(index, probability)` entries or the uniform row, and the whole
//! chain can carry a global uniform mixture component (the teleport part of
//! a random-surfer chain). That keeps induced state-action chains with
//! thousands of states affordable while small dense chains lose nothing.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hard cap on fixed-point iterations in [`MarkovChain::stationary`].
pub const STATIONARY_MAX_ITER: usize = 100_000;

/// Probability vector over a finite index set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<S: Scalar> {
    probs: Vec<S>,
}

impl<S: Scalar> Distribution<S> {
    /// Validates nonnegativity and that entries sum to 1 within `S::DIST_TOL`.
    pub fn new(probs: Vec<S>) -> Result<Self> {
        for (i, &p) in probs.iter().enumerate() {
            if p < S::zero() || !p.is_finite() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: p.to_f64(),
                });
            }
        }
        let sum: S = probs.iter().copied().sum();
        if (sum - S::one()).abs() > S::DIST_TOL {
            return Err(Error::NotNormalized {
                sum: sum.to_f64(),
                tol: S::DIST_TOL.to_f64(),
            });
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        let w = S::one() / S::of(n as f64);
        Self {
            probs: vec![w; n],
        }
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut probs = vec![S::zero(); n];
        probs[at] = S::one();
        Self { probs }
    }

    /// Normalizes a nonnegative weight vector. Errors when the total is not
    /// strictly positive.
    pub fn from_weights(weights: Vec<S>) -> Result<Self> {
        for (i, &w) in weights.iter().enumerate() {
            if w < S::zero() || !w.is_finite() {
                return Err(Error::NegativeProbability {
                    index: i,
                    value: w.to_f64(),
                });
            }
        }
        let total: S = weights.iter().copied().sum();
        if total <= S::zero() {
            return Err(Error::NotNormalized {
                sum: total.to_f64(),
                tol: S::DIST_TOL.to_f64(),
            });
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn get(&self, i: usize) -> S {
        self.probs[i]
    }

    /// Inverse-CDF sample driven by a single uniform draw.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        sample_weighted(&self.probs, S::one(), rng)
    }
}

/// Samples an index proportional to `weights` whose total is `total`.
fn sample_weighted<S: Scalar, R: Rng>(weights: &[S], total: S, rng: &mut R) -> usize {
    let u = S::of(rng.random::<f64>()) * total;
    let mut acc = S::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if u < acc {
            return i;
        }
    }
    // Round-off can push the draw past the final cumulative sum.
    weights.len() - 1
}

/// One transition row: explicit sparse entries or the uniform row.
#[derive(Debug, Clone)]
pub(crate) enum Row<S> {
    Entries(Vec<(usize, S)>),
    Uniform,
}

/// Row-stochastic transition matrix with initial distribution and discount.
///
/// The effective transition probability is
/// `P(next | cur) = teleport / n + (1 - teleport) * base_cur(next)`
/// where `base_cur` is the stored row. `teleport = 0` gives a plain chain.
#[derive(Debug, Clone)]
pub struct MarkovChain<S: Scalar> {
    n_states: usize,
    rows: Vec<Row<S>>,
    teleport: S,
    mu0: Distribution<S>,
    gamma: S,
}

fn validate_gamma<S: Scalar>(gamma: S) -> Result<()> {
    if gamma < S::zero() || gamma > S::one() || !gamma.is_finite() {
        return Err(Error::InvalidArgument {
            what: "gamma",
            requirement: "in [0, 1]",
            value: gamma.to_f64(),
        });
    }
    Ok(())
}

fn validate_sparse_row<S: Scalar>(row: usize, n: usize, entries: &[(usize, S)]) -> Result<()> {
    let mut sum = S::zero();
    for &(j, p) in entries {
        if j >= n {
            return Err(Error::DimensionMismatch {
                context: format!("row {row} references state {j} of {n}"),
            });
        }
        if p < S::zero() || !p.is_finite() {
            return Err(Error::NegativeProbability {
                index: j,
                value: p.to_f64(),
            });
        }
        sum = sum + p;
    }
    if (sum - S::one()).abs() > S::STOCHASTIC_TOL {
        return Err(Error::RowNotStochastic {
            row,
            sum: sum.to_f64(),
            tol: S::STOCHASTIC_TOL.to_f64(),
        });
    }
    Ok(())
}

impl<S: Scalar> MarkovChain<S> {
    /// Builds a chain from dense rows. Each row must sum to 1 within
    /// `S::STOCHASTIC_TOL`.
    pub fn from_dense(rows: Vec<Vec<S>>, mu0: Distribution<S>, gamma: S) -> Result<Self> {
        let n = rows.len();
        let sparse = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .enumerate()
                    .filter(|&(_, p)| p != S::zero())
                    .collect::<Vec<_>>()
            })
            .collect();
        Self::from_sparse(n, sparse, mu0, gamma)
    }

    /// Builds a chain from sparse rows (entries need not be sorted).
    pub fn from_sparse(
        n_states: usize,
        rows: Vec<Vec<(usize, S)>>,
        mu0: Distribution<S>,
        gamma: S,
    ) -> Result<Self> {
        if rows.len() != n_states || mu0.len() != n_states {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "chain with {} rows, mu0 of {} for {} states",
                    rows.len(),
                    mu0.len(),
                    n_states
                ),
            });
        }
        validate_gamma(gamma)?;
        for (i, entries) in rows.iter().enumerate() {
            validate_sparse_row(i, n_states, entries)?;
        }
        Ok(Self {
            n_states,
            rows: rows.into_iter().map(Row::Entries).collect(),
            teleport: S::zero(),
            mu0,
            gamma,
        })
    }

    /// Internal constructor for chains with a global uniform component and
    /// possibly uniform rows. Base rows must be row-stochastic.
    pub(crate) fn with_teleport(
        n_states: usize,
        rows: Vec<Row<S>>,
        teleport: S,
        mu0: Distribution<S>,
        gamma: S,
    ) -> Result<Self> {
        if teleport < S::zero() || teleport >= S::one() {
            return Err(Error::InvalidArgument {
                what: "teleport",
                requirement: "in [0, 1)",
                value: teleport.to_f64(),
            });
        }
        validate_gamma(gamma)?;
        for (i, row) in rows.iter().enumerate() {
            if let Row::Entries(entries) = row {
                validate_sparse_row(i, n_states, entries)?;
            }
        }
        Ok(Self {
            n_states,
            rows,
            teleport,
            mu0,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn mu0(&self) -> &Distribution<S> {
        &self.mu0
    }

    /// Effective transition probability `P(next | cur)`.
    pub fn prob(&self, cur: usize, next: usize) -> S {
        let n = S::of(self.n_states as f64);
        let base = match &self.rows[cur] {
            Row::Uniform => S::one() / n,
            Row::Entries(entries) => entries
                .iter()
                .find(|&&(j, _)| j == next)
                .map(|&(_, p)| p)
                .unwrap_or(S::zero()),
        };
        self.teleport / n + (S::one() - self.teleport) * base
    }

    /// Dense row-major copy of the effective transition matrix.
    pub fn dense(&self) -> Vec<S> {
        let n = self.n_states;
        let fn_ = S::of(n as f64);
        let tele = self.teleport / fn_;
        let keep = S::one() - self.teleport;
        let mut out = vec![tele; n * n];
        for (i, row) in self.rows.iter().enumerate() {
            match row {
                Row::Uniform => {
                    let u = keep / fn_;
                    for v in &mut out[i * n..(i + 1) * n] {
                        *v = *v + u;
                    }
                }
                Row::Entries(entries) => {
                    for &(j, p) in entries {
                        out[i * n + j] = out[i * n + j] + keep * p;
                    }
                }
            }
        }
        out
    }

    /// `out = P^T x`: pushes mass one step forward through the chain.
    pub fn transpose_apply(&self, x: &[S], out: &mut [S]) {
        debug_assert_eq!(x.len(), self.n_states);
        debug_assert_eq!(out.len(), self.n_states);
        let n = S::of(self.n_states as f64);
        let keep = S::one() - self.teleport;
        let total: S = x.iter().copied().sum();
        let mut uniform_mass = self.teleport * total;
        for v in out.iter_mut() {
            *v = S::zero();
        }
        for (i, row) in self.rows.iter().enumerate() {
            match row {
                Row::Uniform => uniform_mass = uniform_mass + keep * x[i],
                Row::Entries(entries) => {
                    let xi = keep * x[i];
                    if xi != S::zero() {
                        for &(j, p) in entries {
                            out[j] = out[j] + xi * p;
                        }
                    }
                }
            }
        }
        let spread = uniform_mass / n;
        for v in out.iter_mut() {
            *v = *v + spread;
        }
    }

    /// One application of the occupancy operator:
    /// `(1 - gamma) * mu0_term + gamma * P^T mu`.
    pub fn evolve(&self, mu: &[S], gamma: S, mu0_term: &Distribution<S>) -> Result<Vec<S>> {
        validate_gamma(gamma)?;
        if mu.len() != self.n_states || mu0_term.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "evolve on {} states with mu of {}, mu0 of {}",
                    self.n_states,
                    mu.len(),
                    mu0_term.len()
                ),
            });
        }
        let mut pushed = vec![S::zero(); self.n_states];
        self.transpose_apply(mu, &mut pushed);
        let w0 = S::one() - gamma;
        Ok(pushed
            .iter()
            .zip(mu0_term.probs())
            .map(|(&p, &m)| w0 * m + gamma * p)
            .collect())
    }

    /// Stationary (or discounted occupancy) distribution by fixed-point
    /// iteration.
    ///
    /// * `gamma == 0`: returns `mu0_term`.
    /// * `gamma < 1`: Richardson iteration on
    ///   `(I - gamma P^T) mu = (1 - gamma) mu0_term`, a gamma-contraction,
    ///   renormalized on exit.
    /// * `gamma == 1`: power iteration started at `mu0_term` until
    ///   `||mu - P^T mu||_1 <= tol`, with Cesaro averaging of the iterates as
    ///   a fallback for periodic chains. Non-convergence reports the final
    ///   residual.
    pub fn stationary(
        &self,
        gamma: S,
        mu0_term: &Distribution<S>,
        tol: S,
        max_iter: usize,
    ) -> Result<Distribution<S>> {
        validate_gamma(gamma)?;
        if mu0_term.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "mu0 of {} for chain with {} states",
                    mu0_term.len(),
                    self.n_states
                ),
            });
        }
        if gamma == S::zero() {
            return Ok(mu0_term.clone());
        }
        let mut x = mu0_term.probs().to_vec();
        let mut next = vec![S::zero(); self.n_states];
        if gamma < S::one() {
            // Step difference bounds the solve residual of the linear system.
            let target = tol * (S::one() - gamma);
            let mut residual = S::infinity();
            for _ in 0..max_iter {
                self.transpose_apply(&x, &mut next);
                let w0 = S::one() - gamma;
                let mut diff = S::zero();
                for (xi, (&ni, &mi)) in x.iter_mut().zip(next.iter().zip(mu0_term.probs())) {
                    let updated = w0 * mi + gamma * ni;
                    diff = diff + (updated - *xi).abs();
                    *xi = updated;
                }
                residual = diff;
                if diff <= target {
                    return Distribution::from_weights(x);
                }
            }
            return Err(Error::NoConvergence {
                iters: max_iter,
                residual: residual.to_f64(),
            });
        }
        // gamma == 1: plain power iteration first.
        let mut residual = S::infinity();
        for _ in 0..max_iter {
            self.transpose_apply(&x, &mut next);
            let mut diff = S::zero();
            for (&xi, &ni) in x.iter().zip(next.iter()) {
                diff = diff + (ni - xi).abs();
            }
            if diff <= tol {
                // x itself satisfies the fixed-point residual bound.
                return Distribution::from_weights(x);
            }
            residual = diff;
            std::mem::swap(&mut x, &mut next);
            let total: S = x.iter().copied().sum();
            for v in x.iter_mut() {
                *v = *v / total;
            }
        }
        // Cesaro fallback: averages of the iterates converge for periodic
        // chains even though the iterates themselves cycle.
        let mut avg = x.clone();
        let mut count = S::one();
        for it in 0..max_iter {
            self.transpose_apply(&x, &mut next);
            std::mem::swap(&mut x, &mut next);
            count = count + S::one();
            let w_new = S::one() / count;
            let w_old = S::one() - w_new;
            for (a, &xi) in avg.iter_mut().zip(x.iter()) {
                *a = w_old * *a + w_new * xi;
            }
            if it % 128 == 0 {
                self.transpose_apply(&avg, &mut next);
                let mut diff = S::zero();
                for (&ai, &ni) in avg.iter().zip(next.iter()) {
                    diff = diff + (ni - ai).abs();
                }
                residual = diff;
                if diff <= tol {
                    return Distribution::from_weights(avg);
                }
            }
        }
        Err(Error::NoConvergence {
            iters: 2 * max_iter,
            residual: residual.to_f64(),
        })
    }

    pub(crate) fn rows(&self) -> &[Row<S>] {
        &self.rows
    }

    pub(crate) fn teleport(&self) -> S {
        self.teleport
    }

    /// Samples a successor of `cur`.
    pub fn sample_next<R: Rng>(&self, cur: usize, rng: &mut R) -> usize {
        if self.teleport > S::zero() && S::of(rng.random::<f64>()) < self.teleport {
            return rng.random_range(0..self.n_states);
        }
        match &self.rows[cur] {
            Row::Uniform => rng.random_range(0..self.n_states),
            Row::Entries(entries) => {
                let u = S::of(rng.random::<f64>());
                let mut acc = S::zero();
                for &(j, p) in entries {
                    acc = acc + p;
                    if u < acc {
                        return j;
                    }
                }
                entries.last().map(|&(j, _)| j).unwrap_or(cur)
            }
        }
    }
}

/// Stochastic policy over a finite state-action space, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<S: Scalar> {
    n_states: usize,
    n_actions: usize,
    probs: Vec<S>,
}

impl<S: Scalar> Policy<S> {
    /// Validates shape and that every row sums to 1 within `S::DIST_TOL`.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<S>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "policy table of {} for {n_states}x{n_actions}",
                    probs.len()
                ),
            });
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let mut sum = S::zero();
            for (a, &p) in row.iter().enumerate() {
                if p < S::zero() || !p.is_finite() {
                    return Err(Error::NegativeProbability {
                        index: s * n_actions + a,
                        value: p.to_f64(),
                    });
                }
                sum = sum + p;
            }
            if (sum - S::one()).abs() > S::DIST_TOL {
                return Err(Error::RowNotStochastic {
                    row: s,
                    sum: sum.to_f64(),
                    tol: S::DIST_TOL.to_f64(),
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let w = S::one() / S::of(n_actions as f64);
        Self {
            n_states,
            n_actions,
            probs: vec![w; n_states * n_actions],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, state: usize, action: usize) -> S {
        self.probs[state * self.n_actions + action]
    }

    pub fn row(&self, state: usize) -> &[S] {
        &self.probs[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn sample<R: Rng>(&self, state: usize, rng: &mut R) -> usize {
        sample_weighted(self.row(state), S::one(), rng)
    }

    /// Convex mixture `(1 - alpha) * self + alpha * other`, row by row.
    pub fn mix(&self, other: &Policy<S>, alpha: S) -> Result<Policy<S>> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "mixing {}x{} with {}x{} policies",
                    self.n_states, self.n_actions, other.n_states, other.n_actions
                ),
            });
        }
        if alpha < S::zero() || alpha > S::one() {
            return Err(Error::InvalidArgument {
                what: "alpha",
                requirement: "in [0, 1]",
                value: alpha.to_f64(),
            });
        }
        let keep = S::one() - alpha;
        let probs = self
            .probs
            .iter()
            .zip(other.probs.iter())
            .map(|(&a, &b)| keep * a + alpha * b)
            .collect();
        Policy::new(self.n_states, self.n_actions, probs)
    }
}

/// One observed transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<S> {
    pub state: usize,
    pub action: usize,
    pub reward: S,
    pub next_state: usize,
}

/// Offline dataset of transitions plus the initial states that produced it.
///
/// `horizon` is `Some(h)` when the records are the concatenation of
/// equal-length trajectories of `h` steps each, which trajectory-structured
/// estimators (weighted importance sampling) require.
#[derive(Debug, Clone)]
pub struct TransitionDataset<S: Scalar> {
    n_states: usize,
    n_actions: usize,
    records: Vec<Transition<S>>,
    initial_states: Vec<usize>,
    horizon: Option<usize>,
    sa_counts: Vec<u64>,
    state_counts: Vec<u64>,
}

impl<S: Scalar> TransitionDataset<S> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        records: Vec<Transition<S>>,
        initial_states: Vec<usize>,
        horizon: Option<usize>,
    ) -> Result<Self> {
        let mut sa_counts = vec![0u64; n_states * n_actions];
        let mut state_counts = vec![0u64; n_states];
        for (i, r) in records.iter().enumerate() {
            if r.state >= n_states || r.action >= n_actions || r.next_state >= n_states {
                return Err(Error::RecordOutOfRange {
                    index: i,
                    state: r.state.max(r.next_state),
                    action: r.action,
                    n_states,
                    n_actions,
                });
            }
            sa_counts[r.state * n_actions + r.action] += 1;
            state_counts[r.state] += 1;
        }
        for (i, &s) in initial_states.iter().enumerate() {
            if s >= n_states {
                return Err(Error::RecordOutOfRange {
                    index: i,
                    state: s,
                    action: 0,
                    n_states,
                    n_actions,
                });
            }
        }
        if let Some(h) = horizon {
            if h == 0 || records.len() % h != 0 {
                return Err(Error::DimensionMismatch {
                    context: format!("{} records with horizon {h}", records.len()),
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            records,
            initial_states,
            horizon,
            sa_counts,
            state_counts,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[Transition<S>] {
        &self.records
    }

    pub fn initial_states(&self) -> &[usize] {
        &self.initial_states
    }

    pub fn horizon(&self) -> Option<usize> {
        self.horizon
    }

    pub fn n_trajectories(&self) -> Option<usize> {
        self.horizon.map(|h| self.records.len() / h)
    }

    pub fn sa_counts(&self) -> &[u64] {
        &self.sa_counts
    }

    pub fn state_counts(&self) -> &[u64] {
        &self.state_counts
    }

    /// Empirical distribution over (state, action) pairs.
    pub fn state_action_dist(&self) -> Result<Distribution<S>> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Distribution::from_weights(self.sa_counts.iter().map(|&c| S::of(c as f64)).collect())
    }

    /// Empirical distribution over source states.
    pub fn state_dist(&self) -> Result<Distribution<S>> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Distribution::from_weights(self.state_counts.iter().map(|&c| S::of(c as f64)).collect())
    }

    /// Empirical distribution of the recorded initial states.
    pub fn initial_dist(&self) -> Result<Distribution<S>> {
        if self.initial_states.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut counts = vec![S::zero(); self.n_states];
        for &s in &self.initial_states {
            counts[s] = counts[s] + S::one();
        }
        Distribution::from_weights(counts)
    }
}

/// Finite MDP with row-sparse transitions and deterministic mean rewards.
#[derive(Debug, Clone)]
pub struct TabularMdp<S: Scalar> {
    n_states: usize,
    n_actions: usize,
    rows: Vec<Vec<(usize, S)>>,
    rewards: Vec<S>,
    mu0: Distribution<S>,
    gamma: S,
}

impl<S: Scalar> TabularMdp<S> {
    /// Builds an MDP from sparse rows indexed by `state * n_actions + action`.
    pub fn from_sparse(
        n_states: usize,
        n_actions: usize,
        rows: Vec<Vec<(usize, S)>>,
        rewards: Vec<S>,
        mu0: Distribution<S>,
        gamma: S,
    ) -> Result<Self> {
        if rows.len() != n_states * n_actions
            || rewards.len() != n_states * n_actions
            || mu0.len() != n_states
        {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "{} rows, {} rewards, mu0 of {} for {n_states}x{n_actions}",
                    rows.len(),
                    rewards.len(),
                    mu0.len()
                ),
            });
        }
        validate_gamma(gamma)?;
        for (i, entries) in rows.iter().enumerate() {
            validate_sparse_row(i, n_states, entries)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            rows,
            rewards,
            mu0,
            gamma,
        })
    }

    /// Builds an MDP from a dense `P[s][a][s']` tensor.
    pub fn from_dense(
        transition: Vec<Vec<Vec<S>>>,
        rewards: Vec<Vec<S>>,
        mu0: Distribution<S>,
        gamma: S,
    ) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map(|a| a.len()).unwrap_or(0);
        let mut rows = Vec::with_capacity(n_states * n_actions);
        let mut flat_rewards = Vec::with_capacity(n_states * n_actions);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions || rewards[s].len() != n_actions {
                return Err(Error::DimensionMismatch {
                    context: format!("ragged action dimension at state {s}"),
                });
            }
            for (a, row) in per_action.iter().enumerate() {
                rows.push(
                    row.iter()
                        .copied()
                        .enumerate()
                        .filter(|&(_, p)| p != S::zero())
                        .collect(),
                );
                flat_rewards.push(rewards[s][a]);
            }
        }
        Self::from_sparse(n_states, n_actions, rows, flat_rewards, mu0, gamma)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> S {
        self.gamma
    }

    pub fn mu0(&self) -> &Distribution<S> {
        &self.mu0
    }

    pub fn reward(&self, state: usize, action: usize) -> S {
        self.rewards[state * self.n_actions + action]
    }

    pub fn rewards(&self) -> &[S] {
        &self.rewards
    }

    pub fn row(&self, state: usize, action: usize) -> &[(usize, S)] {
        &self.rows[state * self.n_actions + action]
    }

    /// State-action chain induced by following `policy`:
    /// `P[(s,a) -> (s',a')] = P(s'|s,a) * policy(a'|s')`, with initial
    /// distribution `mu0(s) * policy(a|s)` and the MDP's discount.
    pub fn induced_chain(&self, policy: &Policy<S>) -> Result<MarkovChain<S>> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "policy {}x{} for MDP {}x{}",
                    policy.n_states(),
                    policy.n_actions(),
                    self.n_states,
                    self.n_actions
                ),
            });
        }
        let n_pairs = self.n_states * self.n_actions;
        let mut rows = Vec::with_capacity(n_pairs);
        for sa in 0..n_pairs {
            let mut entries = Vec::new();
            for &(s_next, p) in &self.rows[sa] {
                for (a_next, &pa) in policy.row(s_next).iter().enumerate() {
                    if pa != S::zero() {
                        entries.push((s_next * self.n_actions + a_next, p * pa));
                    }
                }
            }
            rows.push(entries);
        }
        let mut mu0 = vec![S::zero(); n_pairs];
        for s in 0..self.n_states {
            let m = self.mu0.get(s);
            for (a, &pa) in policy.row(s).iter().enumerate() {
                mu0[s * self.n_actions + a] = m * pa;
            }
        }
        MarkovChain::from_sparse(n_pairs, rows, Distribution::new(mu0)?, self.gamma)
    }

    /// Rolls out `n_trajectories` trajectories of `horizon` steps each under
    /// `policy`. Deterministic for a fixed seed.
    pub fn sample_trajectories(
        &self,
        policy: &Policy<S>,
        n_trajectories: usize,
        horizon: usize,
        seed: u64,
    ) -> Result<TransitionDataset<S>> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch {
                context: "policy shape does not match MDP".to_string(),
            });
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument {
                what: "horizon",
                requirement: "at least 1",
                value: 0.0,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = Vec::with_capacity(n_trajectories * horizon);
        let mut initial_states = Vec::with_capacity(n_trajectories);
        for _ in 0..n_trajectories {
            let mut s = self.mu0.sample(&mut rng);
            initial_states.push(s);
            for _ in 0..horizon {
                let a = policy.sample(s, &mut rng);
                let reward = self.reward(s, a);
                let row = self.row(s, a);
                let next = sample_sparse_row(row, &mut rng);
                records.push(Transition {
                    state: s,
                    action: a,
                    reward,
                    next_state: next,
                });
                s = next;
            }
        }
        TransitionDataset::new(
            self.n_states,
            self.n_actions,
            records,
            initial_states,
            Some(horizon),
        )
    }
}

fn sample_sparse_row<S: Scalar, R: Rng>(entries: &[(usize, S)], rng: &mut R) -> usize {
    let u = S::of(rng.random::<f64>());
    let mut acc = S::zero();
    for &(j, p) in entries {
        acc = acc + p;
        if u < acc {
            return j;
        }
    }
    entries.last().map(|&(j, _)| j).expect("empty transition row")
}

/// Q-learning hyperparameters. Exploration decays linearly from `epsilon`
/// to `epsilon_final` across episodes; the returned policy spreads
/// `1 - soften` uniformly over the argmax set of each row (so an untrained
/// all-zero table yields the uniform policy) plus `soften` of uniform
/// exploration.
#[derive(Debug, Clone)]
pub struct QLearningConfig<S> {
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub learning_rate: S,
    pub epsilon: S,
    pub epsilon_final: S,
    pub soften: S,
}

impl<S: Scalar> Default for QLearningConfig<S> {
    fn default() -> Self {
        Self {
            episodes: 1000,
            steps_per_episode: 100,
            learning_rate: S::of(0.1),
            epsilon: S::of(0.1),
            epsilon_final: S::of(0.01),
            soften: S::of(0.1),
        }
    }
}

/// Tabular Q-learning with epsilon-greedy behavior and episodic resets.
///
/// Returns the Q table and the softened greedy policy. `epsilon = 0` never
/// explores off the greedy action; with an optimistic-free zero init that can
/// leave parts of the space unlearned.
pub fn q_learning<S: Scalar>(
    mdp: &TabularMdp<S>,
    config: &QLearningConfig<S>,
    seed: u64,
) -> (Vec<S>, Policy<S>) {
    let policies = q_learning_snapshots(mdp, config, seed, &[config.episodes]);
    let (q, mut snapshots) = policies;
    (q, snapshots.pop().expect("one checkpoint requested"))
}

/// Q-learning that snapshots the softened greedy policy after each requested
/// episode count; one run serves both a target policy and a slightly less
/// trained variant of it. Checkpoints must be sorted ascending and end at
/// `config.episodes`.
pub fn q_learning_snapshots<S: Scalar>(
    mdp: &TabularMdp<S>,
    config: &QLearningConfig<S>,
    seed: u64,
    checkpoints: &[usize],
) -> (Vec<S>, Vec<Policy<S>>) {
    let n_pairs = mdp.n_states() * mdp.n_actions();
    let mut q = vec![S::zero(); n_pairs];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = 0;
    let episodes = config.episodes;
    for ep in 0..episodes {
        while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] == ep {
            snapshots.push(softened_greedy(mdp, &q, config.soften));
            next_checkpoint += 1;
        }
        let progress = if episodes > 1 {
            S::of(ep as f64) / S::of((episodes - 1) as f64)
        } else {
            S::zero()
        };
        let eps = config.epsilon + (config.epsilon_final - config.epsilon) * progress;
        let mut s = mdp.mu0().sample(&mut rng);
        for _ in 0..config.steps_per_episode {
            let a = if S::of(rng.random::<f64>()) < eps {
                rng.random_range(0..mdp.n_actions())
            } else {
                argmax_first(&q[s * mdp.n_actions()..(s + 1) * mdp.n_actions()])
            };
            let r = mdp.reward(s, a);
            let next = sample_sparse_row(mdp.row(s, a), &mut rng);
            let best_next = max_value(&q[next * mdp.n_actions()..(next + 1) * mdp.n_actions()]);
            let idx = s * mdp.n_actions() + a;
            let td = r + mdp.gamma() * best_next - q[idx];
            q[idx] = q[idx] + config.learning_rate * td;
            s = next;
        }
    }
    while next_checkpoint < checkpoints.len() {
        snapshots.push(softened_greedy(mdp, &q, config.soften));
        next_checkpoint += 1;
    }
    (q, snapshots)
}

fn argmax_first<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn max_value<S: Scalar>(row: &[S]) -> S {
    row.iter().copied().fold(S::neg_infinity(), S::max)
}

fn softened_greedy<S: Scalar>(mdp: &TabularMdp<S>, q: &[S], soften: S) -> Policy<S> {
    let n_a = mdp.n_actions();
    let mut probs = vec![S::zero(); mdp.n_states() * n_a];
    let explore = soften / S::of(n_a as f64);
    for s in 0..mdp.n_states() {
        let row = &q[s * n_a..(s + 1) * n_a];
        let best = max_value(row);
        let ties = row.iter().filter(|&&v| v == best).count();
        let greedy_share = (S::one() - soften) / S::of(ties as f64);
        for (a, &v) in row.iter().enumerate() {
            let p = if v == best {
                explore + greedy_share
            } else {
                explore
            };
            probs[s * n_a + a] = p;
        }
    }
    Policy::new(mdp.n_states(), n_a, probs).expect("constructed rows are stochastic")
}
