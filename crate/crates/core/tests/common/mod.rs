//! Test-side oracles built on raw dense arithmetic, independent of the
//! library's chain and solver code paths.

// Each integration-test binary compiles this module separately and uses a
// different subset of the helpers.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Applies the transpose of a dense row-stochastic matrix.
pub fn dense_transpose_apply(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n];
    for (i, row) in rows.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            out[j] += p * x[i];
        }
    }
    out
}

/// Stationary distribution by long plain power iteration. Callers pass
/// chains with strictly positive entries, where this converges geometrically.
pub fn dense_stationary(rows: &[Vec<f64>], iters: usize) -> Vec<f64> {
    let n = rows.len();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        x = dense_transpose_apply(rows, &x);
        let total: f64 = x.iter().sum();
        for v in &mut x {
            *v /= total;
        }
    }
    x
}

/// Discounted occupancy by truncated power series:
/// `(1 - gamma) sum_k gamma^k (P^T)^k mu0`.
pub fn dense_discounted(rows: &[Vec<f64>], mu0: &[f64], gamma: f64, terms: usize) -> Vec<f64> {
    let n = rows.len();
    let mut acc = vec![0.0; n];
    let mut term = mu0.to_vec();
    let mut coeff = 1.0 - gamma;
    for _ in 0..terms {
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += coeff * t;
        }
        term = dense_transpose_apply(rows, &term);
        coeff *= gamma;
    }
    acc
}

/// Row-stochastic matrix with every entry at least `floor / n`, hence
/// ergodic and aperiodic.
pub fn random_ergodic_rows(n: usize, seed: u64, floor: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| floor + rng.random::<f64>()).collect();
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            row
        })
        .collect()
}

/// Normalized strictly positive vector.
pub fn random_positive_dist(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = v.iter().sum();
    for x in &mut v {
        *x /= total;
    }
    v
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
