//! Recover a teleporting surfer's stationary distribution from one logged
//! walk, by the dense solve on the empirical chain and by saddle-point
//! training, and compare the two corrected distributions.

use gendice::estimator::{ratio_table, train, GenDiceConfig, SaddleParams};
use gendice::exact::{empirical_chain, estimate_stationary, exact_ratio_solve};
use gendice::graph::{barabasi_albert, pagerank_chain, random_walk_dataset};
use gendice::Policy;

fn main() -> gendice::Result<()> {
    let n = 100;
    let graph = barabasi_albert(n, 4, 4, 7)?; // scale-free graph
    let chain = pagerank_chain(&graph, 0.1)?; // teleporting surfer
    let data = random_walk_dataset(&chain, 10_000, 0)?; // one logged walk

    // Exact route: dense solve on the empirical chain.
    let emp = empirical_chain(&data)?;
    let tau = exact_ratio_solve(&emp.chain, &emp.sampling, 1.0, &emp.sampling)?;
    let d_exact = estimate_stationary(&tau, &data)?;

    // Trained route: stochastic saddle-point optimization on the same data.
    let config = GenDiceConfig::<f64>::default();
    let init = SaddleParams::tabular(n, 1, &config)?;
    let out = train(&config, &data, &Policy::uniform(n, 1), init)?;
    let d_trained = estimate_stationary(&ratio_table(&out.params), &data)?;

    let truth = chain.stationary(1.0, chain.mu0(), 1e-12, 200_000)?;
    let sup = |d: &[f64]| {
        d.iter()
            .zip(truth.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
    };
    println!("sup-norm error vs the true stationary distribution:");
    println!("  dense solve on the empirical chain: {:.5}", sup(&d_exact));
    println!("  trained ratio:                      {:.5}", sup(&d_trained));
    Ok(())
}
