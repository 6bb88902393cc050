//! Acceptance gate: nine end-to-end checks covering the solver, the trainer,
//! the gradient estimators, the objective's structure, and the three shipped
//! experiments. Each check prints exactly one `criterion N … PASS/FAIL` line
//! (run with `--nocapture` to see the lines for passing tests; failing tests
//! print them in their captured output).
//!
//! Oracles here are deliberately independent of the library's solve paths:
//! stationary distributions come from a local power iteration, discounted
//! occupancies from a truncated power series, inner maximizations from the
//! pointwise closed form of the conjugate, and derivatives from central
//! finite differences.

use std::time::Instant;

use gendice::estimator::{
    ratio_table, saddle_gradients, saddle_objective, train, GenDiceConfig, Optimizer,
    SaddleBatch, SaddleParams,
};
use gendice::exact::exact_ratio_solve;
use gendice::graph::random_walk_dataset;
use gendice::nn::OutputHead;
use gendice::{
    Distribution, FDivergence, MarkovChain, Policy, Transition, TransitionDataset,
};
use gendice_cli::config::Config;
use gendice_cli::metrics::MetricRecord;
use gendice_cli::runner::RunOutput;
use gendice_cli::{run_task, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Print the criterion's one-line verdict, then enforce it.
fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion} ({name}): {tag} — {detail}");
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn run_cfg(task: Task, text: &str) -> RunOutput {
    let config = Config::from_str(text).expect("acceptance config must parse");
    run_task(task, &config).expect("acceptance run must complete")
}

/// The single aggregate row for a (method, metric, size) cell.
fn agg(records: &[MetricRecord], method: &str, metric: &str, size: Option<usize>) -> f64 {
    let rows: Vec<&MetricRecord> = records
        .iter()
        .filter(|r| {
            r.seed.is_none()
                && r.method == method
                && r.metric == metric
                && (size.is_none() || r.n_samples == size)
        })
        .collect();
    assert_eq!(
        rows.len(),
        1,
        "expected exactly one {method}/{metric}/{size:?} aggregate row, found {}",
        rows.len()
    );
    rows[0]
        .value
        .finite()
        .unwrap_or_else(|| panic!("aggregate {method}/{metric}/{size:?} is divergent"))
}

/// All per-seed values for a (method, metric, size) cell, in seed order.
fn per_seed(records: &[MetricRecord], method: &str, metric: &str, size: Option<usize>) -> Vec<f64> {
    records
        .iter()
        .filter(|r| {
            r.seed.is_some()
                && r.method == method
                && r.metric == metric
                && (size.is_none() || r.n_samples == size)
        })
        .map(|r| {
            r.value
                .finite()
                .unwrap_or_else(|| panic!("seed {:?} of {method}/{metric} diverged", r.seed))
        })
        .collect()
}

fn random_stochastic_rows(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect()
}

fn random_positive_dist(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

/// `out[y] = sum_x rows[x][y] * v[x]` — one pull through the transition matrix.
fn transpose_apply(rows: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for x in 0..n {
        for y in 0..n {
            out[y] += rows[x][y] * v[x];
        }
    }
    out
}

/// Oracle stationary distribution: plain power iteration from uniform.
/// Rows here are strictly positive, so the map is a contraction and the
/// iteration converges far past the comparison tolerance.
fn oracle_stationary(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut mu = vec![1.0 / n as f64; n];
    for _ in 0..500_000 {
        let next = transpose_apply(rows, &mu);
        let diff: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if diff <= 1e-14 {
            break;
        }
    }
    mu
}

/// Oracle discounted occupancy `(1-g) * sum_k g^k (P^T)^k mu0`, truncated
/// where the tail weight is far below the comparison tolerance.
fn oracle_discounted(rows: &[Vec<f64>], mu0: &[f64], gamma: f64) -> Vec<f64> {
    let mut term = mu0.to_vec();
    let mut acc: Vec<f64> = mu0.iter().map(|v| (1.0 - gamma) * v).collect();
    let mut weight = 1.0 - gamma;
    for _ in 0..800 {
        term = transpose_apply(rows, &term);
        weight *= gamma;
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Criterion 1: the dense ratio solver agrees with power-iteration oracles.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_exact_solver_matches_power_iteration_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = 2 + case % 19; // sizes 2..=20
        let rows = random_stochastic_rows(n, &mut rng);
        let p = random_positive_dist(n, &mut rng);
        let mu0 = random_positive_dist(n, &mut rng);
        let chain = MarkovChain::from_dense(
            rows.clone(),
            Distribution::new(mu0.clone()).unwrap(),
            1.0,
        )
        .unwrap();
        let p_dist = Distribution::new(p.clone()).unwrap();
        let mu0_dist = Distribution::new(mu0.clone()).unwrap();
        for gamma in [0.9, 1.0] {
            let mu = if gamma == 1.0 {
                oracle_stationary(&rows)
            } else {
                oracle_discounted(&rows, &mu0, gamma)
            };
            let tau = exact_ratio_solve(&chain, &p_dist, gamma, &mu0_dist).unwrap();
            let gap = tau
                .iter()
                .enumerate()
                .map(|(x, &t)| (t - mu[x] / p[x]).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(gap);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-6 && elapsed < 10.0;
    verdict(
        1,
        "dense ratio solver vs power-iteration oracle",
        pass,
        &format!(
            "worst sup-norm gap {worst:.3e} over 100 chains x {{0.9, 1.0}} (tolerance 1e-6), {elapsed:.2}s (budget 10s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 2: the trained ratio is insensitive to the penalty weight.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_penalty_weight_does_not_move_the_trained_ratio() {
    let start = Instant::now();
    let rows = vec![
        vec![0.2, 0.5, 0.3],
        vec![0.4, 0.1, 0.5],
        vec![0.6, 0.2, 0.2],
    ];
    let chain = MarkovChain::from_dense(rows, Distribution::uniform(3), 1.0).unwrap();
    let data = random_walk_dataset(&chain, 3000, 7).unwrap();
    let policy = Policy::uniform(3, 1);
    let mut tables: Vec<Vec<f64>> = Vec::new();
    for lambda in [0.1, 1.0, 5.0] {
        let config = GenDiceConfig {
            divergence: FDivergence::ChiSquared,
            lambda,
            gamma: 1.0,
            lr_tau: 0.1,
            lr_f: 0.1,
            lr_u: 0.1,
            batch_size: usize::MAX, // full-batch: deterministic dynamics
            steps: 20_000,
            seed: 0,
            optimizer: Optimizer::Sgd,
            positive_head: OutputHead::Square,
            self_normalize: false,
            trace_every: 5_000,
        };
        let init = SaddleParams::tabular(3, 1, &config).unwrap();
        let out = train(&config, &data, &policy, init).unwrap();
        tables.push(ratio_table(&out.params));
    }
    let mut worst = 0.0f64;
    for i in 0..tables.len() {
        for j in i + 1..tables.len() {
            let gap = tables[i]
                .iter()
                .zip(&tables[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(gap);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 5e-2 && elapsed < 60.0;
    verdict(
        2,
        "trained ratio insensitive to penalty weight",
        pass,
        &format!(
            "worst pairwise sup-norm gap {worst:.3e} across lambda in {{0.1, 1, 5}} (tolerance 5e-2), {elapsed:.2}s (budget 60s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: vertex-importance recovery at 10k samples, and the mean
// penalty beating self-normalization under the equal-evaluation budget.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_walk_recovery_beats_self_normalization() {
    let start = Instant::now();
    let out = run_cfg(
        Task::Opr,
        "[experiment]\n\
         seeds = 20\n\
         jobs = 4\n\
         \n\
         [samples]\n\
         sizes = 10000\n\
         \n\
         [baselines]\n\
         exact = false\n\
         model-based = false\n\
         self-normalized = true\n",
    );
    let gendice = agg(&out.records, "gendice", "log-kl_mean", Some(10_000));
    let selfnorm = agg(&out.records, "gendice-selfnorm", "log-kl_mean", Some(10_000));
    let elapsed = start.elapsed().as_secs_f64();
    let pass = gendice <= -4.0 && gendice < selfnorm && elapsed < 600.0;
    verdict(
        3,
        "vertex-importance recovery and penalty vs self-normalization",
        pass,
        &format!(
            "mean log KL {gendice:.4} (need <= -4.0), self-normalized {selfnorm:.4} (need worse), {elapsed:.1}s (budget 600s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: small-sample ordering against the count-based model.
//
// Known red. The tabular ratio estimate and the count-based model reduce to
// the same maximum-likelihood stationary distribution on these datasets (the
// corrected distribution p_hat * tau IS the stationary distribution of the
// empirical transition matrix), so the strict ordering asserted here is not
// achievable; the measured means below differ only by optimization noise and
// by unvisited-state handling, both of which favor the model. The check runs
// the stated protocol faithfully and reports what it measures.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_small_sample_ordering_against_count_model() {
    let out = run_cfg(
        Task::Opr,
        "[experiment]\n\
         seeds = 20\n\
         jobs = 4\n\
         \n\
         [samples]\n\
         sizes = 500,1000,2000\n\
         \n\
         [baselines]\n\
         exact = false\n\
         model-based = true\n\
         self-normalized = false\n",
    );
    let mut detail = String::new();
    let mut pass = true;
    for size in [500usize, 1000, 2000] {
        let gendice = agg(&out.records, "gendice", "log-kl_mean", Some(size));
        let model = agg(&out.records, "model-based", "log-kl_mean", Some(size));
        pass &= gendice < model;
        detail.push_str(&format!(
            "n={size}: trained {gendice:.4} vs model {model:.4}; "
        ));
    }
    detail.push_str("need trained < model at every size");
    verdict(4, "small-sample ordering vs count-based model", pass, &detail);
}

// ---------------------------------------------------------------------------
// Criterion 5: analytic gradients of all three parameter blocks match
// central finite differences on randomized MLP saddle parameters.
// ---------------------------------------------------------------------------

fn unit_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut d: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    d.iter_mut().for_each(|v| *v /= norm);
    d
}

#[test]
fn criterion_5_gradients_match_central_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let n_states = 5;
    let rows = random_stochastic_rows(n_states, &mut rng);
    let chain = MarkovChain::from_dense(rows, Distribution::uniform(n_states), 1.0).unwrap();
    let data = random_walk_dataset(&chain, 400, 3).unwrap();
    let policy = Policy::uniform(n_states, 1);
    let divergences = [FDivergence::ChiSquared, FDivergence::Kl, FDivergence::Js];
    let eps = 1e-5;
    let mut worst = 0.0f64;
    let mut checks = 0usize;
    for point in 0..50 {
        let config = GenDiceConfig {
            divergence: divergences[point % 3],
            lambda: 1.0,
            gamma: if point % 2 == 0 { 1.0 } else { 0.9 },
            lr_tau: 1e-3,
            lr_f: 1e-3,
            lr_u: 1e-3,
            batch_size: 400,
            steps: 0,
            seed: 0,
            optimizer: Optimizer::Sgd,
            positive_head: OutputHead::Square,
            self_normalize: false,
            trace_every: 1_000,
        };
        let mut params =
            SaddleParams::mlp(n_states, 1, &[12, 8], &config, 200 + point as u64).unwrap();
        for v in params.tau.params_mut() {
            *v += 0.4 * (rng.random::<f64>() - 0.5);
        }
        for v in params.f.params_mut() {
            *v += 0.4 * (rng.random::<f64>() - 0.5);
        }
        params.u = 2.0 * rng.random::<f64>() - 1.0;
        // Successor actions are degenerate (single action), so the batch is
        // a deterministic function of the dataset and can be reused across
        // the perturbed evaluations.
        let batch = SaddleBatch::full(&data, &policy, &mut rng);
        let grads = saddle_gradients(&config, &params, &batch).unwrap();
        let eval = |p: &SaddleParams<f64>| saddle_objective(&config, p, &batch).unwrap();

        // Ratio and critic blocks: directional derivative along a random unit
        // direction. Scalar block: plain central difference.
        for block in 0..3 {
            let (analytic, fd) = match block {
                0 => {
                    let d = unit_direction(params.tau.n_params(), &mut rng);
                    let analytic: f64 =
                        grads.tau.iter().zip(&d).map(|(g, di)| g * di).sum();
                    let mut plus = params.clone();
                    for (v, di) in plus.tau.params_mut().iter_mut().zip(&d) {
                        *v += eps * di;
                    }
                    let mut minus = params.clone();
                    for (v, di) in minus.tau.params_mut().iter_mut().zip(&d) {
                        *v -= eps * di;
                    }
                    (analytic, (eval(&plus) - eval(&minus)) / (2.0 * eps))
                }
                1 => {
                    let d = unit_direction(params.f.n_params(), &mut rng);
                    let analytic: f64 = grads.f.iter().zip(&d).map(|(g, di)| g * di).sum();
                    let mut plus = params.clone();
                    for (v, di) in plus.f.params_mut().iter_mut().zip(&d) {
                        *v += eps * di;
                    }
                    let mut minus = params.clone();
                    for (v, di) in minus.f.params_mut().iter_mut().zip(&d) {
                        *v -= eps * di;
                    }
                    (analytic, (eval(&plus) - eval(&minus)) / (2.0 * eps))
                }
                _ => {
                    let mut plus = params.clone();
                    plus.u += eps;
                    let mut minus = params.clone();
                    minus.u -= eps;
                    (grads.u, (eval(&plus) - eval(&minus)) / (2.0 * eps))
                }
            };
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checks += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && checks == 150 && elapsed < 30.0;
    verdict(
        5,
        "gradients vs central finite differences",
        pass,
        &format!(
            "worst relative error {worst:.3e} over {checks} block checks at 50 MLP points (tolerance 1e-4), {elapsed:.2}s (budget 30s)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 6 and 7 share an exactly-enumerated dataset whose empirical
// transition counts realize a rational chain with no sampling error, so the
// inner maximization over the critic has a closed form the test can evaluate
// through the production objective.
// ---------------------------------------------------------------------------

/// Transition rows in twentieths; each row sums to 20. With 100 records per
/// source state every count `100 * k / 20` is an integer, so the dataset's
/// empirical frequencies equal the rational chain exactly.
const ROWS_A: [[u64; 4]; 4] = [
    [4, 6, 5, 5],
    [8, 2, 6, 4],
    [2, 10, 4, 4],
    [6, 4, 4, 6],
];
const ROWS_B: [[u64; 4]; 4] = [
    [10, 4, 2, 4],
    [2, 8, 6, 4],
    [4, 4, 8, 4],
    [6, 6, 2, 6],
];

struct Enumerated {
    data: TransitionDataset<f64>,
    batch: SaddleBatch,
    n: usize,
}

fn enumerated_fixture(rows20: &[[u64; 4]; 4]) -> Enumerated {
    let n = 4;
    let per_source = 100u64;
    let mut records = Vec::new();
    for x in 0..n {
        assert_eq!(rows20[x].iter().sum::<u64>(), 20, "row {x} must sum to 20");
        for y in 0..n {
            assert_eq!((per_source * rows20[x][y]) % 20, 0);
            for _ in 0..per_source * rows20[x][y] / 20 {
                records.push(Transition {
                    state: x,
                    action: 0,
                    reward: 0.0,
                    next_state: y,
                });
            }
        }
    }
    let data = TransitionDataset::new(n, 1, records, vec![0, 1, 2, 3], None).unwrap();
    let policy = Policy::uniform(n, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let batch = SaddleBatch::full(&data, &policy, &mut rng);
    Enumerated { data, batch, n }
}

fn structural_config(gamma: f64, lambda: f64) -> GenDiceConfig<f64> {
    GenDiceConfig {
        divergence: FDivergence::ChiSquared,
        lambda,
        gamma,
        lr_tau: 0.1,
        lr_f: 0.1,
        lr_u: 0.1,
        batch_size: usize::MAX,
        steps: 0,
        seed: 0,
        optimizer: Optimizer::Sgd,
        positive_head: OutputHead::Square,
        self_normalize: false,
        trace_every: 1_000,
    }
}

/// Objective after maximizing out the critic and the penalty scalar by their
/// pointwise closed forms, evaluated through the production objective at the
/// maximizing arguments. For each pair `y` the critic's terms group into
/// `B(y) f(y) - C(y) phi*(f(y))`, maximized at `f* = closed_form_dual(B/C)`;
/// the penalty is maximized at `u* = mean(tau) - 1`.
fn inner_max_objective(config: &GenDiceConfig<f64>, fx: &Enumerated, tau: &[f64]) -> f64 {
    let n = fx.n;
    let n_records = fx.batch.transitions.len() as f64;
    let n_inits = fx.batch.initials.len().max(1) as f64;
    let mut sum_tau_into = vec![0.0; n];
    let mut source_count = vec![0.0; n];
    for &(s, _a, s_next, _a_next) in &fx.batch.transitions {
        sum_tau_into[s_next] += tau[s];
        source_count[s] += 1.0;
    }
    let mut init_count = vec![0.0; n];
    for &(s0, _a0) in &fx.batch.initials {
        init_count[s0] += 1.0;
    }
    let gamma = config.gamma;
    let mean_tau: f64 = (0..n).map(|y| source_count[y] / n_records * tau[y]).sum();
    let mut params = SaddleParams::tabular(n, 1, config).unwrap();
    let tau_head = params.tau.head();
    for (slot, &v) in params.tau.params_mut().iter_mut().zip(tau) {
        *slot = tau_head.preimage(v).unwrap();
    }
    let f_head = params.f.head();
    for (y, slot) in params.f.params_mut().iter_mut().enumerate() {
        let linear = gamma * sum_tau_into[y] / n_records
            + if gamma < 1.0 {
                (1.0 - gamma) * init_count[y] / n_inits
            } else {
                0.0
            };
        let mass = source_count[y] / n_records * tau[y];
        let f_star = if mass > 0.0 {
            config
                .divergence
                .closed_form_dual(linear / mass)
                .expect("closed-form maximizer exists for a finite ratio")
        } else {
            assert!(
                linear.abs() < 1e-12,
                "critic coefficient without opposing mass would be unbounded"
            );
            0.0
        };
        *slot = f_head.preimage(f_star).unwrap();
    }
    params.u = if config.lambda > 0.0 { mean_tau - 1.0 } else { 0.0 };
    saddle_objective(config, &params, &fx.batch).unwrap()
}

#[test]
fn criterion_6_inner_maximized_objective_is_midpoint_convex() {
    let fixtures = [enumerated_fixture(&ROWS_A), enumerated_fixture(&ROWS_B)];
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst = f64::NEG_INFINITY;
    for case in 0..100 {
        let fx = &fixtures[case % 2];
        let gamma = if case % 4 < 2 { 1.0 } else { 0.9 };
        let config = structural_config(gamma, 1.0);
        let tau_a: Vec<f64> = (0..fx.n).map(|_| 0.2 + 2.8 * rng.random::<f64>()).collect();
        let tau_b: Vec<f64> = (0..fx.n).map(|_| 0.2 + 2.8 * rng.random::<f64>()).collect();
        let tau_mid: Vec<f64> = tau_a
            .iter()
            .zip(&tau_b)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let j_a = inner_max_objective(&config, fx, &tau_a);
        let j_b = inner_max_objective(&config, fx, &tau_b);
        let j_mid = inner_max_objective(&config, fx, &tau_mid);
        worst = worst.max(j_mid - 0.5 * (j_a + j_b));
    }
    let pass = worst <= 1e-10;
    verdict(
        6,
        "inner-maximized objective is midpoint convex",
        pass,
        &format!(
            "worst midpoint violation {worst:.3e} over 100 random ratio pairs (tolerance 1e-10)"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: without the penalty every rescaling of the solution zeroes the
// objective; with it only the correctly normalized one does; and in training
// the penalty is what pins the dataset mean of the ratio near one.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_penalty_breaks_scale_degeneracy() {
    // Exact part on the enumerated fixture at gamma = 1.
    let fx = enumerated_fixture(&ROWS_A);
    let rows: Vec<Vec<f64>> = ROWS_A
        .iter()
        .map(|row| row.iter().map(|&k| k as f64 / 20.0).collect())
        .collect();
    let chain = MarkovChain::from_dense(rows, Distribution::uniform(4), 1.0).unwrap();
    let p_hat = fx.data.state_dist().unwrap();
    let mu0 = Distribution::uniform(4);
    let tau_star = exact_ratio_solve(&chain, &p_hat, 1.0, &mu0).unwrap();

    let mut detail = String::new();
    let mut pass = true;
    for c in [0.0, 0.5, 1.0, 2.0] {
        let scaled: Vec<f64> = tau_star.iter().map(|t| c * t).collect();
        let j_free = inner_max_objective(&structural_config(1.0, 0.0), &fx, &scaled);
        let j_pinned = inner_max_objective(&structural_config(1.0, 1.0), &fx, &scaled);
        pass &= j_free.abs() <= 1e-10;
        if (c - 1.0).abs() < 1e-12 {
            pass &= j_pinned.abs() <= 1e-10;
        } else {
            pass &= j_pinned >= 0.1;
        }
        detail.push_str(&format!("c={c}: free {j_free:.2e}, pinned {j_pinned:.3}; "));
    }

    // Trained part: with the penalty the dataset mean of the ratio stays
    // pinned near one on every seed; without it the scale drifts far outside.
    let out = run_cfg(
        Task::Ablate,
        "[experiment]\n\
         seeds = 20\n\
         jobs = 4\n\
         \n\
         [ablate]\n\
         factor = penalty\n\
         \n\
         [samples]\n\
         sizes = 10000\n\
         \n\
         [gendice]\n\
         lr = 1e-2\n",
    );
    let on = per_seed(&out.records, "penalty-on", "tau-mean", Some(10_000));
    let off = per_seed(&out.records, "penalty-off", "tau-mean", Some(10_000));
    assert_eq!(on.len(), 20);
    assert_eq!(off.len(), 20);
    let on_ok = on.iter().all(|&v| (0.9..=1.1).contains(&v));
    let off_ok = off.iter().all(|&v| !(0.5..=1.5).contains(&v));
    pass &= on_ok && off_ok;
    let on_mean = on.iter().sum::<f64>() / on.len() as f64;
    let off_mean = off.iter().sum::<f64>() / off.len() as f64;
    detail.push_str(&format!(
        "trained ratio means: penalty on {on_mean:.4} (every seed in [0.9, 1.1]: {on_ok}), off {off_mean:.3} (every seed outside [0.5, 1.5]: {off_ok})"
    ));
    verdict(7, "penalty breaks scale degeneracy", pass, &detail);
}

// ---------------------------------------------------------------------------
// Criterion 8: off-policy value estimation error shrinks as trajectories
// lengthen, and the final estimate lands within 5% of the oracle value.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_value_estimate_error_shrinks_with_horizon() {
    let out = run_cfg(
        Task::OpeTaxi,
        "[experiment]\n\
         seeds = 20\n\
         jobs = 4\n\
         \n\
         [taxi]\n\
         grid = 5\n\
         gammas = 1.0\n\
         alphas = 0.33\n\
         lengths = 200,400,1000,2000\n\
         n-trajectories = 100\n\
         \n\
         [gendice]\n\
         gamma = 1\n",
    );
    let lengths = [200usize, 400, 1000, 2000];
    let curve: Vec<f64> = lengths
        .iter()
        .map(|&len| agg(&out.records, "gendice", "log-mse", Some(len)))
        .collect();
    let monotone = curve.windows(2).all(|w| w[1] < w[0]);
    let rho = out
        .records
        .iter()
        .find(|r| r.method == "oracle" && r.metric == "rho")
        .and_then(|r| r.value.finite())
        .expect("oracle value present");
    let rmse_final = (0.5 * curve[curve.len() - 1]).exp();
    let close = rmse_final <= 0.05 * rho.abs();
    let pass = monotone && close;
    verdict(
        8,
        "value estimate error shrinks with horizon",
        pass,
        &format!(
            "log MSE {curve:.4?} strictly decreasing: {monotone}; final RMSE {rmse_final:.5} vs oracle {rho:.5} (need <= 5%): {close}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: divergence choice under identical full-batch training —
// chi-squared and Jensen-Shannon converge, the KL conjugate lags far behind.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_divergence_choice_ranking() {
    let out = run_cfg(
        Task::Ablate,
        "[experiment]\n\
         seeds = 20\n\
         jobs = 4\n\
         \n\
         [ablate]\n\
         factor = divergence\n\
         \n\
         [samples]\n\
         sizes = 10000\n\
         \n\
         [gendice]\n\
         lr = 0.03\n\
         batch-size = 1000000\n\
         steps = 1000\n\
         optimizer = sgd\n",
    );
    let chi2 = agg(&out.records, "chi2", "log-kl_mean", Some(10_000));
    let js = agg(&out.records, "js", "log-kl_mean", Some(10_000));
    let kl = agg(&out.records, "kl", "log-kl_mean", Some(10_000));
    let pass = chi2 <= js && js < kl;
    verdict(
        9,
        "divergence choice ranking",
        pass,
        &format!("mean log KL: chi2 {chi2:.5} <= js {js:.5} < kl {kl:.5}"),
    );
}
