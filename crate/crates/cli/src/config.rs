//! Experiment configuration: a flat `key = value` file with `[section]`
//! headers, parsed strictly (unknown sections or keys are errors) into typed
//! settings with every default materialized. Each run writes the resolved
//! form back next to its results so a run is reproducible from its artifacts
//! alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gendice::estimator::Optimizer;
use gendice::nn::OutputHead;
use gendice::FDivergence;

/// Configuration or validation failure; the CLI maps these to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

fn err<T>(message: impl Into<String>) -> Result<T> {
    Err(ConfigError(message.into()))
}

#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    /// Number of independent seeds; each seed redraws the environment
    /// (where applicable) and the logged data.
    pub seeds: usize,
    /// Worker threads for the seed loop.
    pub jobs: usize,
    /// Write per-seed training traces and ratio tables next to the results.
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct GraphSettings {
    /// Vertices of the generated preferential-attachment graph.
    pub n: usize,
    /// Edges added per arriving vertex.
    pub m: usize,
    /// Seed-clique size.
    pub m0: usize,
    /// Uniform-jump probability of the random surfer.
    pub eta: f64,
    /// Load this edge list instead of generating a graph (one `u v` pair
    /// per line); the graph is then fixed across seeds.
    pub edge_file: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SampleSettings {
    /// Walk lengths to sweep.
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GenDiceSettings {
    pub divergence: FDivergence,
    pub lambda: f64,
    pub gamma: f64,
    /// One step size shared by the ratio, critic, and penalty players.
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub optimizer: Optimizer,
    pub head: OutputHead,
}

#[derive(Debug, Clone)]
pub struct BaselineSettings {
    /// Additive transition-count smoothing for the fitted model.
    pub smoothing: f64,
    pub model_based: bool,
    /// Also run the closed-form solve of the empirical chain.
    pub exact: bool,
    /// Also run the mean-normalized (penalty-free) training variant.
    pub self_normalized: bool,
    /// Step-wise weighted importance sampling (trajectory tasks only).
    pub wis: bool,
}

#[derive(Debug, Clone)]
pub struct TaxiSettings {
    pub grid: usize,
    pub arrival_prob: f64,
    pub dropoff_reward: f64,
    pub destination: (usize, usize),
    /// Discount factors to sweep.
    pub gammas: Vec<f64>,
    /// Behavior-mixture coefficients to sweep; `alpha = 1` collects data
    /// with the evaluated policy itself.
    pub alphas: Vec<f64>,
    /// Trajectory lengths to sweep.
    pub lengths: Vec<usize>,
    pub n_trajectories: usize,
    pub q_episodes: usize,
    /// Episode count for the weaker snapshot policy used as the mixture
    /// base.
    pub base_episodes: usize,
    pub q_steps: usize,
    pub q_lr: f64,
    pub q_epsilon: f64,
    pub q_epsilon_final: f64,
    pub q_soften: f64,
    /// The policies are trained once with this seed and held fixed across
    /// experiment seeds.
    pub q_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationFactor {
    Lambda,
    Divergence,
    Activation,
    Penalty,
}

impl AblationFactor {
    pub fn name(self) -> &'static str {
        match self {
            AblationFactor::Lambda => "lambda",
            AblationFactor::Divergence => "divergence",
            AblationFactor::Activation => "activation",
            AblationFactor::Penalty => "penalty",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        match name {
            "lambda" => Ok(AblationFactor::Lambda),
            "divergence" => Ok(AblationFactor::Divergence),
            "activation" => Ok(AblationFactor::Activation),
            "penalty" => Ok(AblationFactor::Penalty),
            other => err(format!(
                "unknown ablation factor '{other}' (expected lambda, divergence, activation, or penalty)"
            )),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblateSettings {
    pub factor: AblationFactor,
    pub lambdas: Vec<f64>,
    pub divergences: Vec<FDivergence>,
    pub activations: Vec<OutputHead>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub experiment: ExperimentSettings,
    pub graph: GraphSettings,
    pub samples: SampleSettings,
    pub gendice: GenDiceSettings,
    pub baselines: BaselineSettings,
    pub taxi: TaxiSettings,
    pub ablate: AblateSettings,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            experiment: ExperimentSettings {
                seeds: 20,
                jobs: 1,
                trace: false,
            },
            graph: GraphSettings {
                n: 100,
                m: 4,
                m0: 4,
                eta: 0.1,
                edge_file: None,
            },
            samples: SampleSettings {
                sizes: vec![10_000],
            },
            gendice: GenDiceSettings {
                divergence: FDivergence::ChiSquared,
                lambda: 1.0,
                gamma: 1.0,
                lr: 1e-3,
                batch_size: 2048,
                steps: 5000,
                optimizer: Optimizer::AdaptiveSgd,
                head: OutputHead::Square,
            },
            baselines: BaselineSettings {
                smoothing: 0.0,
                model_based: true,
                exact: true,
                self_normalized: true,
                wis: true,
            },
            taxi: TaxiSettings {
                grid: 5,
                arrival_prob: 0.05,
                dropoff_reward: 1.0,
                destination: (2, 2),
                gammas: vec![1.0],
                alphas: vec![0.33],
                lengths: vec![200, 400, 1000, 2000],
                n_trajectories: 100,
                q_episodes: 1000,
                base_episodes: 950,
                q_steps: 100,
                q_lr: 0.1,
                q_epsilon: 1.0,
                q_epsilon_final: 0.01,
                q_soften: 0.05,
                q_seed: 0,
            },
            ablate: AblateSettings {
                factor: AblationFactor::Lambda,
                lambdas: vec![0.1, 0.5, 1.0, 2.0, 5.0],
                divergences: vec![FDivergence::ChiSquared, FDivergence::Js, FDivergence::Kl],
                activations: vec![OutputHead::Square, OutputHead::Softplus, OutputHead::Exp],
            },
        }
    }
}

fn parse_value<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<T> {
    raw.parse().map_or_else(
        |_| err(format!("[{section}] {key}: cannot parse '{raw}'")),
        Ok,
    )
}

fn parse_list<T: FromStr>(section: &str, key: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return err(format!("[{section}] {key}: empty list"));
    }
    items
        .into_iter()
        .map(|item| parse_value(section, key, item))
        .collect()
}

fn parse_bool(section: &str, key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => err(format!("[{section}] {key}: expected a boolean, got '{other}'")),
    }
}

fn parse_pair(section: &str, key: &str, raw: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return err(format!("[{section}] {key}: expected 'row,col', got '{raw}'"));
    }
    Ok((
        parse_value(section, key, parts[0])?,
        parse_value(section, key, parts[1])?,
    ))
}

fn named<T>(
    section: &str,
    key: &str,
    raw: &str,
    from_name: impl Fn(&str) -> gendice::Result<T>,
) -> Result<T> {
    from_name(raw).map_or_else(
        |e| err(format!("[{section}] {key}: {e}")),
        Ok,
    )
}

impl Config {
    /// Parses and validates a config file on top of the defaults.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let mut config = Config::default();
        let mut section = String::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return err(format!("line {}: unterminated section header", idx + 1));
                };
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return err(format!("line {}: expected 'key = value'", idx + 1));
            };
            config.apply(&section, key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match section {
            "experiment" => match key {
                "seeds" => self.experiment.seeds = parse_value(section, key, value)?,
                "jobs" => self.experiment.jobs = parse_value(section, key, value)?,
                "trace" => self.experiment.trace = parse_bool(section, key, value)?,
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "graph" => match key {
                "n" => self.graph.n = parse_value(section, key, value)?,
                "m" => self.graph.m = parse_value(section, key, value)?,
                "m0" => self.graph.m0 = parse_value(section, key, value)?,
                "eta" => self.graph.eta = parse_value(section, key, value)?,
                "edge-file" => self.graph.edge_file = Some(PathBuf::from(value)),
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "samples" => match key {
                "sizes" => self.samples.sizes = parse_list(section, key, value)?,
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "gendice" => match key {
                "divergence" => {
                    self.gendice.divergence = named(section, key, value, FDivergence::from_name)?
                }
                "lambda" => self.gendice.lambda = parse_value(section, key, value)?,
                "gamma" => self.gendice.gamma = parse_value(section, key, value)?,
                "lr" => self.gendice.lr = parse_value(section, key, value)?,
                "batch-size" => self.gendice.batch_size = parse_value(section, key, value)?,
                "steps" => self.gendice.steps = parse_value(section, key, value)?,
                "optimizer" => {
                    self.gendice.optimizer = named(section, key, value, Optimizer::from_name)?
                }
                "head" => self.gendice.head = named(section, key, value, OutputHead::from_name)?,
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "baselines" => match key {
                "smoothing" => self.baselines.smoothing = parse_value(section, key, value)?,
                "model-based" => self.baselines.model_based = parse_bool(section, key, value)?,
                "exact" => self.baselines.exact = parse_bool(section, key, value)?,
                "self-normalized" => {
                    self.baselines.self_normalized = parse_bool(section, key, value)?
                }
                "wis" => self.baselines.wis = parse_bool(section, key, value)?,
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "taxi" => match key {
                "grid" => self.taxi.grid = parse_value(section, key, value)?,
                "arrival-prob" => self.taxi.arrival_prob = parse_value(section, key, value)?,
                "dropoff-reward" => self.taxi.dropoff_reward = parse_value(section, key, value)?,
                "destination" => self.taxi.destination = parse_pair(section, key, value)?,
                "gammas" => self.taxi.gammas = parse_list(section, key, value)?,
                "alphas" => self.taxi.alphas = parse_list(section, key, value)?,
                "lengths" => self.taxi.lengths = parse_list(section, key, value)?,
                "n-trajectories" => {
                    self.taxi.n_trajectories = parse_value(section, key, value)?
                }
                "q-episodes" => self.taxi.q_episodes = parse_value(section, key, value)?,
                "base-episodes" => self.taxi.base_episodes = parse_value(section, key, value)?,
                "q-steps" => self.taxi.q_steps = parse_value(section, key, value)?,
                "q-lr" => self.taxi.q_lr = parse_value(section, key, value)?,
                "q-epsilon" => self.taxi.q_epsilon = parse_value(section, key, value)?,
                "q-epsilon-final" => {
                    self.taxi.q_epsilon_final = parse_value(section, key, value)?
                }
                "q-soften" => self.taxi.q_soften = parse_value(section, key, value)?,
                "q-seed" => self.taxi.q_seed = parse_value(section, key, value)?,
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "ablate" => match key {
                "factor" => self.ablate.factor = AblationFactor::from_name(value)?,
                "lambdas" => self.ablate.lambdas = parse_list(section, key, value)?,
                "divergences" => {
                    let names: Vec<String> = parse_list(section, key, value)?;
                    self.ablate.divergences = names
                        .iter()
                        .map(|n| named(section, key, n, FDivergence::from_name))
                        .collect::<Result<_>>()?;
                }
                "activations" => {
                    let names: Vec<String> = parse_list(section, key, value)?;
                    self.ablate.activations = names
                        .iter()
                        .map(|n| named(section, key, n, OutputHead::from_name))
                        .collect::<Result<_>>()?;
                }
                _ => return err(format!("unknown key [{section}] {key}")),
            },
            "" => return err(format!("key '{key}' before any [section] header")),
            other => return err(format!("unknown section [{other}]")),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.seeds == 0 {
            return err("[experiment] seeds: must be at least 1");
        }
        if e.jobs == 0 {
            return err("[experiment] jobs: must be at least 1");
        }
        let g = &self.graph;
        if g.edge_file.is_none() && !(1 <= g.m && g.m <= g.m0 && g.m0 < g.n) {
            return err("[graph] requires 1 <= m <= m0 < n");
        }
        if !(0.0..1.0).contains(&g.eta) {
            return err("[graph] eta: must be in [0, 1)");
        }
        if self.samples.sizes.iter().any(|&s| s == 0) {
            return err("[samples] sizes: entries must be positive");
        }
        let d = &self.gendice;
        if d.lambda < 0.0 {
            return err("[gendice] lambda: must be nonnegative");
        }
        if !(d.gamma > 0.0 && d.gamma <= 1.0) {
            return err("[gendice] gamma: must be in (0, 1]");
        }
        if d.lr <= 0.0 {
            return err("[gendice] lr: must be positive");
        }
        if d.batch_size == 0 || d.steps == 0 {
            return err("[gendice] batch-size and steps must be positive");
        }
        if !d.head.is_nonnegative() {
            return err("[gendice] head: the ratio head must have nonnegative range");
        }
        if self.baselines.smoothing < 0.0 {
            return err("[baselines] smoothing: must be nonnegative");
        }
        let t = &self.taxi;
        if t.grid < 2 {
            return err("[taxi] grid: must be at least 2");
        }
        if t.destination.0 >= t.grid || t.destination.1 >= t.grid {
            return err("[taxi] destination: outside the board");
        }
        if t.gammas.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
            return err("[taxi] gammas: entries must be in (0, 1]");
        }
        if t.alphas.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return err("[taxi] alphas: entries must be in [0, 1]");
        }
        if t.lengths.iter().any(|&l| l == 0) || t.n_trajectories == 0 {
            return err("[taxi] lengths and n-trajectories must be positive");
        }
        if t.q_episodes == 0 || t.base_episodes == 0 || t.q_steps == 0 {
            return err("[taxi] q-episodes, base-episodes, q-steps must be positive");
        }
        if t.base_episodes > t.q_episodes {
            return err("[taxi] base-episodes: must not exceed q-episodes");
        }
        let a = &self.ablate;
        if a.lambdas.iter().any(|&l| l < 0.0) {
            return err("[ablate] lambdas: entries must be nonnegative");
        }
        if a.lambdas.is_empty() || a.divergences.is_empty() || a.activations.is_empty() {
            return err("[ablate] sweep lists must be nonempty");
        }
        if a.activations.iter().any(|&h| !h.is_nonnegative()) {
            return err("[ablate] activations: ratio heads must have nonnegative range");
        }
        Ok(())
    }

    /// Serializes the fully-resolved configuration, defaults included, in a
    /// fixed section and key order.
    pub fn resolved(&self) -> String {
        fn list<T: std::fmt::Display>(items: &[T]) -> String {
            items
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut out = String::new();
        let e = &self.experiment;
        let _ = writeln!(out, "[experiment]");
        let _ = writeln!(out, "seeds = {}", e.seeds);
        let _ = writeln!(out, "jobs = {}", e.jobs);
        let _ = writeln!(out, "trace = {}", e.trace);
        let g = &self.graph;
        let _ = writeln!(out, "\n[graph]");
        let _ = writeln!(out, "n = {}", g.n);
        let _ = writeln!(out, "m = {}", g.m);
        let _ = writeln!(out, "m0 = {}", g.m0);
        let _ = writeln!(out, "eta = {}", g.eta);
        if let Some(path) = &g.edge_file {
            let _ = writeln!(out, "edge-file = {}", path.display());
        }
        let _ = writeln!(out, "\n[samples]");
        let _ = writeln!(out, "sizes = {}", list(&self.samples.sizes));
        let d = &self.gendice;
        let _ = writeln!(out, "\n[gendice]");
        let _ = writeln!(out, "divergence = {}", d.divergence.name());
        let _ = writeln!(out, "lambda = {}", d.lambda);
        let _ = writeln!(out, "gamma = {}", d.gamma);
        let _ = writeln!(out, "lr = {}", d.lr);
        let _ = writeln!(out, "batch-size = {}", d.batch_size);
        let _ = writeln!(out, "steps = {}", d.steps);
        let _ = writeln!(out, "optimizer = {}", d.optimizer.name());
        let _ = writeln!(out, "head = {}", d.head.name());
        let b = &self.baselines;
        let _ = writeln!(out, "\n[baselines]");
        let _ = writeln!(out, "smoothing = {}", b.smoothing);
        let _ = writeln!(out, "model-based = {}", b.model_based);
        let _ = writeln!(out, "exact = {}", b.exact);
        let _ = writeln!(out, "self-normalized = {}", b.self_normalized);
        let _ = writeln!(out, "wis = {}", b.wis);
        let t = &self.taxi;
        let _ = writeln!(out, "\n[taxi]");
        let _ = writeln!(out, "grid = {}", t.grid);
        let _ = writeln!(out, "arrival-prob = {}", t.arrival_prob);
        let _ = writeln!(out, "dropoff-reward = {}", t.dropoff_reward);
        let _ = writeln!(out, "destination = {},{}", t.destination.0, t.destination.1);
        let _ = writeln!(out, "gammas = {}", list(&t.gammas));
        let _ = writeln!(out, "alphas = {}", list(&t.alphas));
        let _ = writeln!(out, "lengths = {}", list(&t.lengths));
        let _ = writeln!(out, "n-trajectories = {}", t.n_trajectories);
        let _ = writeln!(out, "q-episodes = {}", t.q_episodes);
        let _ = writeln!(out, "base-episodes = {}", t.base_episodes);
        let _ = writeln!(out, "q-steps = {}", t.q_steps);
        let _ = writeln!(out, "q-lr = {}", t.q_lr);
        let _ = writeln!(out, "q-epsilon = {}", t.q_epsilon);
        let _ = writeln!(out, "q-epsilon-final = {}", t.q_epsilon_final);
        let _ = writeln!(out, "q-soften = {}", t.q_soften);
        let _ = writeln!(out, "q-seed = {}", t.q_seed);
        let a = &self.ablate;
        let _ = writeln!(out, "\n[ablate]");
        let _ = writeln!(out, "factor = {}", a.factor.name());
        let _ = writeln!(out, "lambdas = {}", list(&a.lambdas));
        let _ = writeln!(
            out,
            "divergences = {}",
            a.divergences
                .iter()
                .map(|d| d.name())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(
            out,
            "activations = {}",
            a.activations
                .iter()
                .map(|h| h.name())
                .collect::<Vec<_>>()
                .join(",")
        );
        out
    }
}

/// Raw sections for callers that need to inspect a file without the typed
/// layer (used by tests).
pub fn raw_sections(text: &str) -> BTreeMap<String, BTreeMap<String, String>> {
    let mut sections = BTreeMap::new();
    let mut current = String::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if let Some((key, value)) = line.split_once('=') {
            sections
                .entry(current.clone())
                .or_insert_with(BTreeMap::new)
                .insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    sections
}
