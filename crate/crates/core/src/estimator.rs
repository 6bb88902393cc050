//! Stochastic saddle-point estimation of stationary distribution ratios.
//!
//! The unknown is `tau(s, a) = mu(s, a) / p(s, a)`, the ratio between the
//! stationary (or discounted occupancy) distribution of the evaluated chain
//! and the distribution that produced the offline records. `tau` is the
//! unique minimizer of a divergence between the `tau`-corrected data
//! distribution and its one-step pushforward; via convex conjugacy that
//! divergence turns into a saddle objective
//!
//! `J(tau, f, u) = (1 - g) E_mu0[f]
//!               + g E_p[tau(s, a) f(s', a')]
//!               - E_p[tau(s, a) phi*(f(s, a))]
//!               + lam (E_p[tau] u - u - u^2 / 2)`
//!
//! minimized over `tau`, maximized over the critic `f` and the scalar `u`
//! (`u` linearizes the quadratic penalty that pins `E_p[tau] = 1`). All
//! expectations are over minibatches of the dataset, so plain alternating
//! SGD on the three blocks converges to the ratio without ever touching the
//! environment.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::divergence::FDivergence;
use crate::error::{Error, Result};
use crate::markov::{Distribution, Policy, TransitionDataset};
use crate::nn::{MlpParams, MlpWorkspace, OutputHead};
use crate::scalar::Scalar;

/// Training aborts when the batch objective leaves this band.
const OBJECTIVE_GUARD: f64 = 1e8;
const ADAPTIVE_DECAY: f64 = 0.999;
const ADAPTIVE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Plain alternating SGD.
    Sgd,
    /// SGD with per-parameter step sizes from a running second-moment
    /// average (decay 0.999).
    AdaptiveSgd,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::AdaptiveSgd => "adaptive",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sgd" => Ok(Optimizer::Sgd),
            "adaptive" => Ok(Optimizer::AdaptiveSgd),
            other => Err(Error::UnknownName {
                kind: "optimizer",
                name: other.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenDiceConfig<S> {
    pub divergence: FDivergence,
    /// Weight of the `E_p[tau] = 1` penalty, nonnegative.
    pub lambda: S,
    /// Discount of the evaluated chain, in `(0, 1]`; `1` targets the
    /// stationary distribution.
    pub gamma: S,
    pub lr_tau: S,
    pub lr_f: S,
    pub lr_u: S,
    /// Minibatch size; anything `>= dataset.len()` switches to full-batch
    /// passes in record order.
    pub batch_size: usize,
    pub steps: usize,
    /// Seed for batch sampling.
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Output head of the ratio model; must have nonnegative range.
    pub positive_head: OutputHead,
    /// Divide the ratio by its dataset mean inside the objective instead of
    /// penalizing the mean. Tabular ratio models only, and `lambda` must be
    /// zero.
    pub self_normalize: bool,
    /// Record the batch objective every this many steps (0 disables).
    pub trace_every: usize,
}

impl<S: Scalar> Default for GenDiceConfig<S> {
    fn default() -> Self {
        Self {
            divergence: FDivergence::ChiSquared,
            lambda: S::one(),
            gamma: S::one(),
            lr_tau: S::of(1e-3),
            lr_f: S::of(1e-3),
            lr_u: S::of(1e-3),
            batch_size: 2048,
            steps: 5000,
            seed: 0,
            optimizer: Optimizer::AdaptiveSgd,
            positive_head: OutputHead::Square,
            self_normalize: false,
            trace_every: 0,
        }
    }
}

/// Ratio model or critic: a table over state-action pairs or an MLP on
/// one-hot features, each behind an output head.
#[derive(Debug, Clone, PartialEq)]
pub enum Approximator<S: Scalar> {
    Table { theta: Vec<S>, head: OutputHead },
    Mlp(MlpParams<S>),
}

/// Scratch space for [`Approximator`] passes (one-hot buffer and MLP
/// workspace; empty for tables).
#[derive(Debug, Clone)]
pub struct ApproxScratch<S> {
    input: Vec<S>,
    mlp: Option<MlpWorkspace<S>>,
}

impl<S: Scalar> Approximator<S> {
    /// Table holding `value` at every pair.
    pub fn table(n_pairs: usize, value: S, head: OutputHead) -> Result<Self> {
        let theta = vec![head.preimage(value)?; n_pairs];
        Ok(Approximator::Table { theta, head })
    }

    /// MLP on one-hot `(state, action)` features.
    pub fn mlp(
        n_states: usize,
        n_actions: usize,
        hidden: &[usize],
        head: OutputHead,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(n_states + n_actions);
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Approximator::Mlp(MlpParams::init(&sizes, head, seed)?))
    }

    pub fn head(&self) -> OutputHead {
        match self {
            Approximator::Table { head, .. } => *head,
            Approximator::Mlp(p) => p.head(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Approximator::Table { theta, .. } => theta.len(),
            Approximator::Mlp(p) => p.n_params(),
        }
    }

    /// Flat view of the parameters (table entries or MLP weights).
    pub fn params(&self) -> &[S] {
        match self {
            Approximator::Table { theta, .. } => theta,
            Approximator::Mlp(p) => p.data(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [S] {
        match self {
            Approximator::Table { theta, .. } => theta,
            Approximator::Mlp(p) => p.data_mut(),
        }
    }

    pub fn scratch(&self, n_states: usize, n_actions: usize) -> ApproxScratch<S> {
        match self {
            Approximator::Table { .. } => ApproxScratch {
                input: Vec::new(),
                mlp: None,
            },
            Approximator::Mlp(p) => ApproxScratch {
                input: vec![S::zero(); n_states + n_actions],
                mlp: Some(p.workspace()),
            },
        }
    }

    fn encode(input: &mut [S], s: usize, a: usize, n_actions: usize) {
        for v in input.iter_mut() {
            *v = S::zero();
        }
        let n_states = input.len() - n_actions;
        input[s] = S::one();
        input[n_states + a] = S::one();
    }

    pub fn eval(&self, s: usize, a: usize, n_actions: usize, scratch: &mut ApproxScratch<S>) -> S {
        match self {
            Approximator::Table { theta, head } => head.apply(theta[s * n_actions + a]),
            Approximator::Mlp(p) => {
                Self::encode(&mut scratch.input, s, a, n_actions);
                p.forward(&scratch.input, scratch.mlp.as_mut().expect("mlp scratch"))
            }
        }
    }

    /// Adds `upstream * d(value)/d(param)` into `grad`; returns the value.
    pub fn eval_grad(
        &self,
        s: usize,
        a: usize,
        n_actions: usize,
        upstream: S,
        scratch: &mut ApproxScratch<S>,
        grad: &mut [S],
    ) -> S {
        match self {
            Approximator::Table { theta, head } => {
                let idx = s * n_actions + a;
                grad[idx] = grad[idx] + upstream * head.deriv(theta[idx]);
                head.apply(theta[idx])
            }
            Approximator::Mlp(p) => {
                Self::encode(&mut scratch.input, s, a, n_actions);
                p.value_and_grad(
                    &scratch.input,
                    upstream,
                    scratch.mlp.as_mut().expect("mlp scratch"),
                    grad,
                )
            }
        }
    }
}

/// The three blocks of the saddle problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleParams<S: Scalar> {
    pub n_states: usize,
    pub n_actions: usize,
    pub tau: Approximator<S>,
    pub f: Approximator<S>,
    pub u: S,
}

/// Gradient buffers matching [`SaddleParams`].
#[derive(Debug, Clone)]
pub struct SaddleGrads<S> {
    pub tau: Vec<S>,
    pub f: Vec<S>,
    pub u: S,
}

impl<S: Scalar> SaddleGrads<S> {
    pub fn zeroed(params: &SaddleParams<S>) -> Self {
        Self {
            tau: vec![S::zero(); params.tau.n_params()],
            f: vec![S::zero(); params.f.n_params()],
            u: S::zero(),
        }
    }

    fn clear(&mut self) {
        self.tau.iter_mut().for_each(|v| *v = S::zero());
        self.f.iter_mut().for_each(|v| *v = S::zero());
        self.u = S::zero();
    }
}

/// Scratch for a full saddle evaluation.
#[derive(Debug, Clone)]
pub struct SaddleScratch<S> {
    tau: ApproxScratch<S>,
    f: ApproxScratch<S>,
}

impl<S: Scalar> SaddleParams<S> {
    fn critic_head(divergence: FDivergence) -> OutputHead {
        // The critic must stay inside the conjugate's domain; only the
        // Jensen-Shannon conjugate has a boundary.
        match divergence {
            FDivergence::Js => OutputHead::CapLn2,
            _ => OutputHead::Identity,
        }
    }

    fn validated_head(config: &GenDiceConfig<S>) -> Result<OutputHead> {
        if !config.positive_head.is_nonnegative() {
            return Err(Error::InvalidArgument {
                what: "positive_head",
                requirement: "a head with nonnegative range",
                value: f64::NAN,
            });
        }
        Ok(config.positive_head)
    }

    /// Tabular ratio and critic: `tau = 1` everywhere, `f = 0`, `u = 0`.
    pub fn tabular(
        n_states: usize,
        n_actions: usize,
        config: &GenDiceConfig<S>,
    ) -> Result<Self> {
        let head = Self::validated_head(config)?;
        Ok(Self {
            n_states,
            n_actions,
            tau: Approximator::table(n_states * n_actions, S::one(), head)?,
            f: Approximator::table(n_states * n_actions, S::zero(), Self::critic_head(config.divergence))?,
            u: S::zero(),
        })
    }

    /// MLP ratio and critic with the given hidden sizes.
    pub fn mlp(
        n_states: usize,
        n_actions: usize,
        hidden: &[usize],
        config: &GenDiceConfig<S>,
        seed: u64,
    ) -> Result<Self> {
        let head = Self::validated_head(config)?;
        Ok(Self {
            n_states,
            n_actions,
            tau: Approximator::mlp(n_states, n_actions, hidden, head, seed)?,
            f: Approximator::mlp(
                n_states,
                n_actions,
                hidden,
                Self::critic_head(config.divergence),
                seed.wrapping_add(1),
            )?,
            u: S::zero(),
        })
    }

    pub fn scratch(&self) -> SaddleScratch<S> {
        SaddleScratch {
            tau: self.tau.scratch(self.n_states, self.n_actions),
            f: self.f.scratch(self.n_states, self.n_actions),
        }
    }
}

/// Minibatch of `(s, a, s', a')` transitions with `a'` drawn from the target
/// policy, plus `(s0, a0)` pairs for the initial-distribution term.
#[derive(Debug, Clone)]
pub struct SaddleBatch {
    pub transitions: Vec<(usize, usize, usize, usize)>,
    pub initials: Vec<(usize, usize)>,
}

impl SaddleBatch {
    /// Uniform sample of `batch_size` records and initial states, each with
    /// replacement.
    pub fn sample<S: Scalar, R: Rng>(
        dataset: &TransitionDataset<S>,
        policy: &Policy<S>,
        batch_size: usize,
        rng: &mut R,
    ) -> Self {
        let records = dataset.records();
        let transitions = (0..batch_size)
            .map(|_| {
                let r = &records[rng.random_range(0..records.len())];
                let a_next = policy.sample(r.next_state, rng);
                (r.state, r.action, r.next_state, a_next)
            })
            .collect();
        let inits = dataset.initial_states();
        let initials = if inits.is_empty() {
            Vec::new()
        } else {
            (0..batch_size)
                .map(|_| {
                    let s0 = inits[rng.random_range(0..inits.len())];
                    (s0, policy.sample(s0, rng))
                })
                .collect()
        };
        Self {
            transitions,
            initials,
        }
    }

    /// Every record once, in order (successor actions still sampled).
    pub fn full<S: Scalar, R: Rng>(
        dataset: &TransitionDataset<S>,
        policy: &Policy<S>,
        rng: &mut R,
    ) -> Self {
        let transitions = dataset
            .records()
            .iter()
            .map(|r| {
                let a_next = policy.sample(r.next_state, rng);
                (r.state, r.action, r.next_state, a_next)
            })
            .collect();
        let initials = dataset
            .initial_states()
            .iter()
            .map(|&s0| (s0, policy.sample(s0, rng)))
            .collect();
        Self {
            transitions,
            initials,
        }
    }
}

struct BatchEval<S> {
    objective: S,
    mean_tau: S,
}

/// Shared evaluator behind the public objective and gradient entry points.
/// `phat` switches on self-normalization: the ratio is divided by
/// `m = E_phat[tau]` inside the objective and the penalty terms drop.
fn eval_batch<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
    phat: Option<&Distribution<S>>,
    scratch: &mut SaddleScratch<S>,
    mut grads: Option<&mut SaddleGrads<S>>,
) -> Result<BatchEval<S>> {
    if batch.transitions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n_actions = params.n_actions;
    let gamma = config.gamma;
    let lambda = config.lambda;
    let divergence = config.divergence;
    let inv_b = S::one() / S::of(batch.transitions.len() as f64);

    // Normalization scale and direct table access for the self-normalized
    // route, which differentiates through the dataset mean of tau.
    let table = match phat {
        None => None,
        Some(p) => match &params.tau {
            Approximator::Table { theta, head } => {
                if p.len() != theta.len() {
                    return Err(Error::DimensionMismatch {
                        context: format!(
                            "sampling distribution of {} for a ratio table of {}",
                            p.len(),
                            theta.len()
                        ),
                    });
                }
                let mut m = S::zero();
                for (x, &t) in theta.iter().enumerate() {
                    m = m + p.get(x) * head.apply(t);
                }
                if !(m > S::zero()) || !m.is_finite() {
                    return Err(Error::NonPositiveMean { mean: m.to_f64() });
                }
                Some((theta, *head, m))
            }
            Approximator::Mlp(_) => {
                return Err(Error::InvalidArgument {
                    what: "self_normalize",
                    requirement: "a tabular ratio model",
                    value: f64::NAN,
                });
            }
        },
    };
    let scale = table.as_ref().map(|&(_, _, m)| m).unwrap_or(S::one());

    let mut sn_coef = if table.is_some() && grads.is_some() {
        Some(vec![S::zero(); params.tau.n_params()])
    } else {
        None
    };
    let mut sn_dot = S::zero();

    let mut sum_tau_raw = S::zero();
    let mut sum_pair = S::zero();
    for &(s, a, s_next, a_next) in &batch.transitions {
        let tau_raw = params.tau.eval(s, a, n_actions, &mut scratch.tau);
        let tau = tau_raw / scale;
        let f_cur = params.f.eval(s, a, n_actions, &mut scratch.f);
        let f_next = params.f.eval(s_next, a_next, n_actions, &mut scratch.f);
        let conj = divergence.phi_star(f_cur)?;
        sum_tau_raw = sum_tau_raw + tau_raw;
        sum_pair = sum_pair + gamma * tau * f_next - tau * conj;
        if let Some(g) = grads.as_deref_mut() {
            let w = (gamma * f_next - conj) * inv_b;
            match &mut sn_coef {
                Some(acc) => {
                    acc[s * n_actions + a] = acc[s * n_actions + a] + w;
                    sn_dot = sn_dot + w * tau;
                }
                None => {
                    let coef = w + lambda * params.u * inv_b;
                    params
                        .tau
                        .eval_grad(s, a, n_actions, coef, &mut scratch.tau, &mut g.tau);
                }
            }
            let conj_deriv = divergence.phi_star_deriv(f_cur)?;
            params
                .f
                .eval_grad(s_next, a_next, n_actions, gamma * tau * inv_b, &mut scratch.f, &mut g.f);
            params.f.eval_grad(
                s,
                a,
                n_actions,
                -(tau * conj_deriv) * inv_b,
                &mut scratch.f,
                &mut g.f,
            );
        }
    }
    let batch_mean_tau = sum_tau_raw * inv_b;
    let mut objective = sum_pair * inv_b;

    if gamma < S::one() {
        if batch.initials.is_empty() {
            return Err(Error::InvalidArgument {
                what: "initial pairs",
                requirement: "nonempty when gamma < 1",
                value: 0.0,
            });
        }
        let w0 = (S::one() - gamma) / S::of(batch.initials.len() as f64);
        for &(s0, a0) in &batch.initials {
            objective = objective + w0 * params.f.eval(s0, a0, n_actions, &mut scratch.f);
            if let Some(g) = grads.as_deref_mut() {
                params
                    .f
                    .eval_grad(s0, a0, n_actions, w0, &mut scratch.f, &mut g.f);
            }
        }
    }

    let mean_tau = match table {
        Some((theta, head, m)) => {
            if let (Some(g), Some(acc)) = (grads.as_deref_mut(), sn_coef.take()) {
                let p = phat.expect("self-normalized route has phat");
                for (x, &t) in theta.iter().enumerate() {
                    g.tau[x] =
                        g.tau[x] + head.deriv(t) * (acc[x] - sn_dot * p.get(x)) / m;
                }
            }
            m
        }
        None => {
            let u = params.u;
            objective = objective
                + lambda * (u * batch_mean_tau - u - u * u * S::of(0.5));
            if let Some(g) = grads.as_deref_mut() {
                g.u = lambda * (batch_mean_tau - S::one() - u);
            }
            batch_mean_tau
        }
    };
    Ok(BatchEval {
        objective,
        mean_tau,
    })
}

/// Saddle objective on one batch (penalized form).
pub fn saddle_objective<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
) -> Result<S> {
    let mut scratch = params.scratch();
    eval_batch(config, params, batch, None, &mut scratch, None).map(|b| b.objective)
}

/// The default objective specialized to the chi-squared divergence;
/// agrees with [`saddle_objective`] under `FDivergence::ChiSquared`.
pub fn saddle_objective_chi2<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
) -> Result<S> {
    let mut chi2 = config.clone();
    chi2.divergence = FDivergence::ChiSquared;
    saddle_objective(&chi2, params, batch)
}

/// Batch gradients of the penalized objective with respect to all three
/// blocks (steepest ascent direction for each; `tau` descends).
pub fn saddle_gradients<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
) -> Result<SaddleGrads<S>> {
    let mut scratch = params.scratch();
    let mut grads = SaddleGrads::zeroed(params);
    eval_batch(config, params, batch, None, &mut scratch, Some(&mut grads))?;
    Ok(grads)
}

/// Objective with the ratio divided by its dataset mean `E_phat[tau]`
/// instead of the mean penalty. Tabular ratio models only.
pub fn self_normalized_objective<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
    phat: &Distribution<S>,
) -> Result<S> {
    let mut scratch = params.scratch();
    eval_batch(config, params, batch, Some(phat), &mut scratch, None).map(|b| b.objective)
}

/// Gradients of [`self_normalized_objective`], differentiated through the
/// normalization.
pub fn self_normalized_gradients<S: Scalar>(
    config: &GenDiceConfig<S>,
    params: &SaddleParams<S>,
    batch: &SaddleBatch,
    phat: &Distribution<S>,
) -> Result<SaddleGrads<S>> {
    let mut scratch = params.scratch();
    let mut grads = SaddleGrads::zeroed(params);
    eval_batch(config, params, batch, Some(phat), &mut scratch, Some(&mut grads))?;
    Ok(grads)
}

/// One objective trace point, recorded before the update at `step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<S> {
    pub step: usize,
    pub objective: S,
    /// Batch mean of the ratio; dataset mean on the self-normalized route.
    pub mean_tau: S,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<S: Scalar> {
    pub params: SaddleParams<S>,
    pub trace: Vec<TraceEntry<S>>,
}

struct OptState<S> {
    tau: Vec<S>,
    f: Vec<S>,
    u: S,
}

fn step_block<S: Scalar>(
    params: &mut [S],
    grads: &[S],
    state: &mut [S],
    lr: S,
    sign: S,
    optimizer: Optimizer,
) {
    match optimizer {
        Optimizer::Sgd => {
            for (p, &g) in params.iter_mut().zip(grads) {
                *p = *p + sign * lr * g;
            }
        }
        Optimizer::AdaptiveSgd => {
            let decay = S::of(ADAPTIVE_DECAY);
            let eps = S::of(ADAPTIVE_EPS);
            for ((p, &g), v) in params.iter_mut().zip(grads).zip(state.iter_mut()) {
                *v = decay * *v + (S::one() - decay) * g * g;
                *p = *p + sign * lr * g / (v.sqrt() + eps);
            }
        }
    }
}

fn validate_config<S: Scalar>(config: &GenDiceConfig<S>) -> Result<()> {
    if config.lambda < S::zero() || !config.lambda.is_finite() {
        return Err(Error::InvalidArgument {
            what: "lambda",
            requirement: "finite and nonnegative",
            value: config.lambda.to_f64(),
        });
    }
    if config.gamma <= S::zero() || config.gamma > S::one() {
        return Err(Error::InvalidArgument {
            what: "gamma",
            requirement: "in (0, 1]",
            value: config.gamma.to_f64(),
        });
    }
    for (name, lr) in [
        ("lr_tau", config.lr_tau),
        ("lr_f", config.lr_f),
        ("lr_u", config.lr_u),
    ] {
        if lr <= S::zero() || !lr.is_finite() {
            return Err(Error::InvalidArgument {
                what: name,
                requirement: "positive",
                value: lr.to_f64(),
            });
        }
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument {
            what: "batch_size",
            requirement: "at least 1",
            value: 0.0,
        });
    }
    if config.self_normalize && config.lambda != S::zero() {
        return Err(Error::InvalidArgument {
            what: "lambda",
            requirement: "zero when self-normalizing",
            value: config.lambda.to_f64(),
        });
    }
    Ok(())
}

/// Runs alternating stochastic updates from `init`: the ratio descends, the
/// critic and penalty multiplier ascend. Deterministic per config seed.
pub fn train<S: Scalar>(
    config: &GenDiceConfig<S>,
    dataset: &TransitionDataset<S>,
    policy: &Policy<S>,
    init: SaddleParams<S>,
) -> Result<TrainOutput<S>> {
    validate_config(config)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if policy.n_states() != dataset.n_states() || policy.n_actions() != dataset.n_actions() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "policy {}x{} for dataset over {}x{}",
                policy.n_states(),
                policy.n_actions(),
                dataset.n_states(),
                dataset.n_actions()
            ),
        });
    }
    if init.n_states != dataset.n_states() || init.n_actions != dataset.n_actions() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "parameters over {}x{} for dataset over {}x{}",
                init.n_states,
                init.n_actions,
                dataset.n_states(),
                dataset.n_actions()
            ),
        });
    }
    if config.gamma < S::one() && dataset.initial_states().is_empty() {
        return Err(Error::InvalidArgument {
            what: "initial states",
            requirement: "nonempty when gamma < 1",
            value: 0.0,
        });
    }
    let phat = if config.self_normalize {
        Some(dataset.state_action_dist()?)
    } else {
        None
    };

    let mut params = init;
    let mut scratch = params.scratch();
    let mut grads = SaddleGrads::zeroed(&params);
    let mut opt_state = OptState {
        tau: vec![S::zero(); params.tau.n_params()],
        f: vec![S::zero(); params.f.n_params()],
        u: S::zero(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let full_batch = config.batch_size >= dataset.len();
    let mut trace = Vec::new();
    let guard = S::of(OBJECTIVE_GUARD);

    for step in 0..config.steps {
        let batch = if full_batch {
            SaddleBatch::full(dataset, policy, &mut rng)
        } else {
            SaddleBatch::sample(dataset, policy, config.batch_size, &mut rng)
        };
        grads.clear();
        let eval = eval_batch(
            config,
            &params,
            &batch,
            phat.as_ref(),
            &mut scratch,
            Some(&mut grads),
        )?;
        if !eval.objective.is_finite() || eval.objective.abs() > guard || !eval.mean_tau.is_finite()
        {
            return Err(Error::Diverged {
                step,
                value: eval.objective.to_f64(),
            });
        }
        if config.trace_every > 0
            && (step % config.trace_every == 0 || step + 1 == config.steps)
        {
            trace.push(TraceEntry {
                step,
                objective: eval.objective,
                mean_tau: eval.mean_tau,
            });
        }
        step_block(
            params.tau.params_mut(),
            &grads.tau,
            &mut opt_state.tau,
            config.lr_tau,
            -S::one(),
            config.optimizer,
        );
        step_block(
            params.f.params_mut(),
            &grads.f,
            &mut opt_state.f,
            config.lr_f,
            S::one(),
            config.optimizer,
        );
        match config.optimizer {
            Optimizer::Sgd => params.u = params.u + config.lr_u * grads.u,
            Optimizer::AdaptiveSgd => {
                let decay = S::of(ADAPTIVE_DECAY);
                opt_state.u = decay * opt_state.u + (S::one() - decay) * grads.u * grads.u;
                params.u =
                    params.u + config.lr_u * grads.u / (opt_state.u.sqrt() + S::of(ADAPTIVE_EPS));
            }
        }
    }
    Ok(TrainOutput { params, trace })
}

/// The ratio at every `(state, action)` pair, row-major.
pub fn ratio_table<S: Scalar>(params: &SaddleParams<S>) -> Vec<S> {
    let mut scratch = params.scratch();
    let mut out = Vec::with_capacity(params.n_states * params.n_actions);
    for s in 0..params.n_states {
        for a in 0..params.n_actions {
            out.push(params.tau.eval(s, a, params.n_actions, &mut scratch.tau));
        }
    }
    out
}
