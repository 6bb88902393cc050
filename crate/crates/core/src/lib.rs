//! Stationary distribution correction estimation for offline data.
//!
//! Given transitions sampled from some unknown distribution `p` over a
//! Markov chain's state space (or an MDP's state-action space), this crate
//! estimates the ratio `tau(x) = mu(x) / p(x)` against the chain's
//! stationary distribution `mu` (or its discounted occupancy), without ever
//! running the chain itself. It provides:
//!
//! * exact tabular solvers ([`exact`]) that recover `tau` from empirical
//!   transition counts by solving the stationary balance equations,
//! * a stochastic saddle-point trainer ([`estimator`]) minimizing a
//!   variational divergence between the corrected distribution and its
//!   one-step pushforward, usable with tabular or small MLP function classes,
//! * environments to evaluate on: random-surfer chains over generated or
//!   loaded graphs ([`graph`]) and a gridworld taxi MDP ([`taxi`]),
//! * baselines ([`baselines`]): empirical model fitting, behavior cloning,
//!   and weighted importance sampling.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the
//! `*64`/`*32` aliases at the crate root pick the precision.

pub mod baselines;
pub mod divergence;
pub mod error;
pub mod estimator;
pub mod exact;
pub mod graph;
pub mod markov;
pub mod nn;
pub mod scalar;
pub mod taxi;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use divergence::FDivergence;
pub use markov::{
    Distribution, MarkovChain, Policy, QLearningConfig, TabularMdp, Transition, TransitionDataset,
};

pub type Distribution64 = markov::Distribution<f64>;
pub type Distribution32 = markov::Distribution<f32>;
pub type MarkovChain64 = markov::MarkovChain<f64>;
pub type MarkovChain32 = markov::MarkovChain<f32>;
pub type Policy64 = markov::Policy<f64>;
pub type Policy32 = markov::Policy<f32>;
pub type TabularMdp64 = markov::TabularMdp<f64>;
pub type TabularMdp32 = markov::TabularMdp<f32>;
pub type TransitionDataset64 = markov::TransitionDataset<f64>;
pub type TransitionDataset32 = markov::TransitionDataset<f32>;
pub type Graph64 = graph::Graph<f64>;
pub type Graph32 = graph::Graph<f32>;
pub type MlpParams64 = nn::MlpParams<f64>;
pub type MlpParams32 = nn::MlpParams<f32>;
pub type SaddleParams64 = estimator::SaddleParams<f64>;
pub type SaddleParams32 = estimator::SaddleParams<f32>;
pub type GenDiceConfig64 = estimator::GenDiceConfig<f64>;
pub type GenDiceConfig32 = estimator::GenDiceConfig<f32>;
pub type EmpiricalModel64 = baselines::EmpiricalModel<f64>;
pub type EmpiricalModel32 = baselines::EmpiricalModel<f32>;
