//! Gridworld taxi MDP.
//!
//! A taxi drives on a `grid x grid` board. Passengers appear independently
//! at the four corners; the taxi can carry one at a time and earns a reward
//! for dropping it off at the destination cell. The state combines taxi
//! cell, the waiting-passenger bit per corner, and carrying status (empty or
//! carrying a passenger picked up at corner `c`):
//! `grid^2 * 16 * 5` states, so `2000` on the default 5x5 board.

use crate::error::{Error, Result};
use crate::markov::{Distribution, TabularMdp};
use crate::scalar::Scalar;

pub const N_CORNERS: usize = 4;
pub const N_STATUS: usize = 1 + N_CORNERS;
pub const N_TAXI_ACTIONS: usize = 5;

/// Actions, in index order.
pub const TAXI_ACTIONS: [&str; N_TAXI_ACTIONS] = ["north", "south", "east", "west", "interact"];

#[derive(Debug, Clone)]
pub struct TaxiConfig<S> {
    /// Board side length, at least 2.
    pub grid: usize,
    /// Per-step arrival probability at each empty corner.
    pub arrival_prob: S,
    /// Reward for a successful dropoff.
    pub dropoff_reward: S,
    /// Dropoff cell as `(row, col)`.
    pub destination: (usize, usize),
    /// Discount attached to the MDP.
    pub gamma: S,
}

impl<S: Scalar> Default for TaxiConfig<S> {
    fn default() -> Self {
        Self {
            grid: 5,
            arrival_prob: S::of(0.05),
            dropoff_reward: S::one(),
            destination: (2, 2),
            gamma: S::of(0.99),
        }
    }
}

pub fn n_taxi_states(grid: usize) -> usize {
    grid * grid * (1 << N_CORNERS) * N_STATUS
}

/// Corner cells in bit order: the bit `c` of the passenger mask refers to
/// `taxi_corners(grid)[c]`.
pub fn taxi_corners(grid: usize) -> [(usize, usize); N_CORNERS] {
    let last = grid - 1;
    [(0, 0), (0, last), (last, 0), (last, last)]
}

/// Packs `(row, col, passenger mask, status)` into a state index.
pub fn encode_taxi_state(
    grid: usize,
    row: usize,
    col: usize,
    mask: usize,
    status: usize,
) -> usize {
    debug_assert!(row < grid && col < grid && mask < (1 << N_CORNERS) && status < N_STATUS);
    (((row * grid + col) << N_CORNERS | mask) * N_STATUS) + status
}

/// Inverse of [`encode_taxi_state`].
pub fn decode_taxi_state(grid: usize, state: usize) -> (usize, usize, usize, usize) {
    let status = state % N_STATUS;
    let rest = state / N_STATUS;
    let mask = rest & ((1 << N_CORNERS) - 1);
    let cell = rest >> N_CORNERS;
    (cell / grid, cell % grid, mask, status)
}

pub fn taxi_mdp<S: Scalar>(config: &TaxiConfig<S>) -> Result<TabularMdp<S>> {
    let grid = config.grid;
    if grid < 2 {
        return Err(Error::InvalidArgument {
            what: "grid",
            requirement: "at least 2",
            value: grid as f64,
        });
    }
    if config.destination.0 >= grid || config.destination.1 >= grid {
        return Err(Error::InvalidArgument {
            what: "destination",
            requirement: "inside the board",
            value: config.destination.0.max(config.destination.1) as f64,
        });
    }
    let p = config.arrival_prob;
    if p < S::zero() || p >= S::one() {
        return Err(Error::InvalidArgument {
            what: "arrival_prob",
            requirement: "in [0, 1)",
            value: p.to_f64(),
        });
    }
    let corners = taxi_corners(grid);
    let n_states = n_taxi_states(grid);
    let mut rows = Vec::with_capacity(n_states * N_TAXI_ACTIONS);
    let mut rewards = Vec::with_capacity(n_states * N_TAXI_ACTIONS);
    for state in 0..n_states {
        let (row, col, mask, status) = decode_taxi_state(grid, state);
        for action in 0..N_TAXI_ACTIONS {
            // Moves clamp at the walls; interact stays put.
            let (next_row, next_col) = match action {
                0 => (row.saturating_sub(1), col),
                1 => ((row + 1).min(grid - 1), col),
                2 => (row, (col + 1).min(grid - 1)),
                3 => (row, col.saturating_sub(1)),
                _ => (row, col),
            };
            let mut next_mask = mask;
            let mut next_status = status;
            let mut reward = S::zero();
            if action == 4 {
                if status != 0 && (row, col) == config.destination {
                    next_status = 0;
                    reward = config.dropoff_reward;
                } else if status == 0 {
                    if let Some(c) = corners.iter().position(|&corner| corner == (row, col)) {
                        if mask & (1 << c) != 0 {
                            next_mask &= !(1 << c);
                            next_status = 1 + c;
                        }
                    }
                }
            }
            rewards.push(reward);
            // Independent arrivals at every corner left empty this step.
            let empty: Vec<usize> = (0..N_CORNERS)
                .filter(|c| next_mask & (1 << c) == 0)
                .collect();
            let mut entries = Vec::with_capacity(1 << empty.len());
            for subset in 0..(1u32 << empty.len()) {
                let mut arrived_mask = next_mask;
                let mut prob = S::one();
                for (bit, &c) in empty.iter().enumerate() {
                    if subset & (1 << bit) != 0 {
                        arrived_mask |= 1 << c;
                        prob = prob * p;
                    } else {
                        prob = prob * (S::one() - p);
                    }
                }
                if prob > S::zero() {
                    entries.push((
                        encode_taxi_state(grid, next_row, next_col, arrived_mask, next_status),
                        prob,
                    ));
                }
            }
            rows.push(entries);
        }
    }
    let center = grid / 2;
    let mu0 = Distribution::point_mass(
        n_states,
        encode_taxi_state(grid, center, center, 0, 0),
    );
    TabularMdp::from_sparse(n_states, N_TAXI_ACTIONS, rows, rewards, mu0, config.gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_mdp() -> TabularMdp<f64> {
        taxi_mdp(&TaxiConfig::default()).unwrap()
    }

    #[test]
    fn default_board_has_two_thousand_states() {
        let mdp = default_mdp();
        assert_eq!(mdp.n_states(), 2000);
        assert_eq!(mdp.n_actions(), 5);
    }

    #[test]
    fn encode_decode_round_trip() {
        for state in 0..n_taxi_states(5) {
            let (row, col, mask, status) = decode_taxi_state(5, state);
            assert_eq!(encode_taxi_state(5, row, col, mask, status), state);
        }
    }

    #[test]
    fn moves_clamp_at_walls() {
        let mdp = default_mdp();
        let corner = encode_taxi_state(5, 0, 0, 0, 0);
        // North from the top row stays put; every successor keeps the cell.
        for &(next, _) in mdp.row(corner, 0) {
            let (row, col, _, _) = decode_taxi_state(5, next);
            assert_eq!((row, col), (0, 0));
        }
        // East moves one column.
        for &(next, _) in mdp.row(corner, 2) {
            let (row, col, _, _) = decode_taxi_state(5, next);
            assert_eq!((row, col), (0, 1));
        }
    }

    #[test]
    fn pickup_clears_the_corner_and_loads_the_taxi() {
        let mdp = default_mdp();
        let waiting = encode_taxi_state(5, 0, 0, 0b0001, 0);
        for &(next, _) in mdp.row(waiting, 4) {
            let (_, _, mask, status) = decode_taxi_state(5, next);
            assert_eq!(status, 1);
            // Corner 0 may refill through a same-step arrival, other corner
            // bits stay clear or fill independently; the pickup itself must
            // not leave the old passenger waiting with the taxi loaded at
            // probability mass 1 - p of refill.
            let _ = mask;
        }
        assert_eq!(mdp.reward(waiting, 4), 0.0);
        // Probability that corner 0 stays empty after pickup is 1 - p.
        let p_empty: f64 = mdp
            .row(waiting, 4)
            .iter()
            .filter(|&&(next, _)| decode_taxi_state(5, next).2 & 1 == 0)
            .map(|&(_, p)| p)
            .sum();
        assert!((p_empty - 0.95).abs() < 1e-12);
    }

    #[test]
    fn dropoff_at_destination_pays_and_empties() {
        let mdp = default_mdp();
        let carrying = encode_taxi_state(5, 2, 2, 0, 3);
        assert_eq!(mdp.reward(carrying, 4), 1.0);
        for &(next, _) in mdp.row(carrying, 4) {
            let (_, _, _, status) = decode_taxi_state(5, next);
            assert_eq!(status, 0);
        }
        // Anywhere else, interact while carrying changes nothing and pays 0.
        let elsewhere = encode_taxi_state(5, 1, 1, 0, 3);
        assert_eq!(mdp.reward(elsewhere, 4), 0.0);
        for &(next, _) in mdp.row(elsewhere, 4) {
            let (_, _, _, status) = decode_taxi_state(5, next);
            assert_eq!(status, 3);
        }
    }

    #[test]
    fn arrivals_are_independent_per_corner() {
        let mdp = default_mdp();
        let idle = encode_taxi_state(5, 2, 1, 0, 0);
        let row = mdp.row(idle, 4);
        assert_eq!(row.len(), 16);
        let p = 0.05f64;
        // One specific corner fills: p * (1 - p)^3.
        let single: f64 = row
            .iter()
            .filter(|&&(next, _)| decode_taxi_state(5, next).2 == 0b0100)
            .map(|&(_, pr)| pr)
            .sum();
        assert!((single - p * (1.0 - p).powi(3)).abs() < 1e-12);
    }

    #[test]
    fn initial_state_is_the_empty_center() {
        let mdp = default_mdp();
        let start = encode_taxi_state(5, 2, 2, 0, 0);
        assert_eq!(mdp.mu0().get(start), 1.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TaxiConfig::<f64>::default();
        cfg.grid = 1;
        assert!(taxi_mdp(&cfg).is_err());
        let mut cfg = TaxiConfig::<f64>::default();
        cfg.destination = (9, 0);
        assert!(taxi_mdp(&cfg).is_err());
        let mut cfg = TaxiConfig::<f64>::default();
        cfg.arrival_prob = 1.0;
        assert!(taxi_mdp(&cfg).is_err());
    }
}
