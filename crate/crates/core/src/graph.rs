//! Graphs and the random-surfer chains built on them.

use std::collections::HashMap;
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::markov::{Distribution, MarkovChain, Transition, TransitionDataset};
use crate::markov::Row;
use crate::scalar::Scalar;

/// Finite graph stored as an edge list, optionally weighted.
///
/// An undirected graph stores each edge once; [`Graph::adjacency`] expands
/// it in both directions. Self-loops are allowed, parallel edges are not.
#[derive(Debug, Clone)]
pub struct Graph<S> {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<S>>,
    undirected: bool,
}

impl<S: Scalar> Graph<S> {
    pub fn directed(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(n_vertices, edges, None, false)
    }

    pub fn undirected(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(n_vertices, edges, None, true)
    }

    fn build(
        n_vertices: usize,
        edges: Vec<(usize, usize)>,
        weights: Option<Vec<S>>,
        undirected: bool,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::DimensionMismatch {
                    context: format!("edge ({u}, {v}) in graph with {n_vertices} vertices"),
                });
            }
            // For undirected graphs (u, v) and (v, u) name the same edge.
            let key = if undirected && v < u { (v, u) } else { (u, v) };
            if !seen.insert(key) {
                return Err(Error::DuplicateEdge { src: u, dst: v });
            }
        }
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::DimensionMismatch {
                    context: format!("{} weights for {} edges", w.len(), edges.len()),
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
        Ok(Self {
            n_vertices,
            edges,
            weights,
            undirected,
        })
    }

    /// Attaches one weight per stored edge.
    pub fn with_weights(mut self, weights: Vec<S>) -> Result<Self> {
        Self::build(self.n_vertices, std::mem::take(&mut self.edges), Some(weights), self.undirected)
    }

    /// Attaches independent `|N(0, 1)|` edge weights, deterministic per seed.
    pub fn with_gaussian_weights(self, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..self.edges.len())
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                S::of(z.abs())
            })
            .collect();
        self.with_weights(weights)
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> Option<&[S]> {
        self.weights.as_deref()
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    /// Out-adjacency as `(neighbor, weight)` lists; unweighted edges get
    /// weight 1, undirected edges appear from both endpoints.
    pub fn adjacency(&self) -> Vec<Vec<(usize, S)>> {
        let mut adj = vec![Vec::new(); self.n_vertices];
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            let w = self.weights.as_ref().map(|ws| ws[i]).unwrap_or(S::one());
            adj[u].push((v, w));
            if self.undirected && u != v {
                adj[v].push((u, w));
            }
        }
        adj
    }
}

/// Barabasi-Albert preferential attachment graph, undirected.
///
/// Starts from a clique on `m0` seed vertices; each arriving vertex attaches
/// to `m` distinct existing vertices drawn proportionally to current degree.
/// Requires `1 <= m <= m0 < n`. Deterministic per seed.
pub fn barabasi_albert<S: Scalar>(n: usize, m: usize, m0: usize, seed: u64) -> Result<Graph<S>> {
    if m < 1 || m > m0 || m0 >= n {
        return Err(Error::InvalidArgument {
            what: "barabasi_albert(n, m, m0)",
            requirement: "1 <= m <= m0 < n",
            value: m as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m0 * (m0 - 1) / 2 + m * (n - m0));
    let mut degree = vec![0u64; n];
    for u in 0..m0 {
        for v in (u + 1)..m0 {
            edges.push((u, v));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    let mut targets = Vec::with_capacity(m);
    for new in m0..n {
        targets.clear();
        // Degree-weighted draws without replacement among existing vertices.
        let mut total: u64 = degree[..new].iter().sum();
        while targets.len() < m {
            let mut pick = rng.random_range(0..total);
            let mut chosen = usize::MAX;
            for v in 0..new {
                if targets.contains(&v) {
                    continue;
                }
                let d = degree[v];
                if pick < d {
                    chosen = v;
                    break;
                }
                pick -= d;
            }
            debug_assert!(chosen != usize::MAX);
            total -= degree[chosen];
            targets.push(chosen);
        }
        for &v in &targets {
            edges.push((v, new));
            degree[v] += 1;
            degree[new] += 1;
        }
    }
    Graph::undirected(n, edges)
}

/// Graph loaded from disk along with the original vertex labels, indexed by
/// the dense ids used in the graph.
#[derive(Debug, Clone)]
pub struct LoadedGraph<S> {
    pub graph: Graph<S>,
    pub ids: Vec<String>,
}

/// Parses a whitespace-separated edge list: `src dst [weight]` per line,
/// `#` comments and blank lines skipped. Vertex labels are arbitrary strings
/// mapped to dense indices in order of first appearance. Duplicate edges are
/// collapsed (weights summed when present); every edge must agree on whether
/// a weight column exists. The file is read as a directed graph.
pub fn load_edge_list<S: Scalar>(path: &Path) -> Result<LoadedGraph<S>> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |label: &str, ids: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        let i = ids.len();
        ids.push(label.to_string());
        index.insert(label.to_string(), i);
        i
    };
    let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut weights: Vec<S> = Vec::new();
    let mut weighted: Option<bool> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let src = tokens.next();
        let dst = tokens.next();
        let weight = tokens.next();
        let (src, dst) = match (src, dst, tokens.next()) {
            (Some(s), Some(d), None) => (s, d),
            _ => {
                return Err(Error::EdgeListParse {
                    path: display,
                    line: lineno + 1,
                    message: "expected `src dst` or `src dst weight`".to_string(),
                });
            }
        };
        let has_weight = weight.is_some();
        match weighted {
            None => weighted = Some(has_weight),
            Some(mode) if mode != has_weight => {
                return Err(Error::EdgeListParse {
                    path: display,
                    line: lineno + 1,
                    message: "mixed weighted and unweighted lines".to_string(),
                });
            }
            _ => {}
        }
        let w = match weight {
            None => S::one(),
            Some(tok) => match tok.parse::<f64>() {
                Ok(v) if v >= 0.0 && v.is_finite() => S::of(v),
                _ => {
                    return Err(Error::EdgeListParse {
                        path: display,
                        line: lineno + 1,
                        message: format!("bad weight {tok:?}"),
                    });
                }
            },
        };
        let u = intern(src, &mut ids);
        let v = intern(dst, &mut ids);
        match edge_index.get(&(u, v)) {
            Some(&i) => weights[i] = weights[i] + w,
            None => {
                edge_index.insert((u, v), edges.len());
                edges.push((u, v));
                weights.push(w);
            }
        }
    }
    if edges.is_empty() {
        return Err(Error::EmptyEdgeList { path: display });
    }
    let n = ids.len();
    let graph = if weighted == Some(true) {
        Graph::build(n, edges, Some(weights), false)?
    } else {
        Graph::directed(n, edges)?
    };
    Ok(LoadedGraph { graph, ids })
}

/// Writes a graph in the format [`load_edge_list`] reads, using the dense
/// vertex indices as labels.
pub fn save_edge_list<S: Scalar>(graph: &Graph<S>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, &(u, v)) in graph.edges().iter().enumerate() {
        match graph.weights() {
            Some(w) => writeln!(out, "{u} {v} {}", w[i].to_f64()).expect("write to string"),
            None => writeln!(out, "{u} {v}").expect("write to string"),
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Random-surfer chain over a graph: with probability `1 - eta` follow a
/// (weight-proportional) out-edge of the current vertex, with probability
/// `eta` jump to a uniform vertex. Vertices without out-edges jump uniformly
/// regardless. Initial distribution uniform, undiscounted.
pub fn pagerank_chain<S: Scalar>(graph: &Graph<S>, eta: S) -> Result<MarkovChain<S>> {
    if eta < S::zero() || eta >= S::one() {
        return Err(Error::InvalidArgument {
            what: "eta",
            requirement: "in [0, 1)",
            value: eta.to_f64(),
        });
    }
    let n = graph.n_vertices();
    if n == 0 {
        return Err(Error::DimensionMismatch {
            context: "random-surfer chain over an empty graph".to_string(),
        });
    }
    let adjacency = graph.adjacency();
    let rows = adjacency
        .into_iter()
        .map(|neighbors| {
            let total: S = neighbors.iter().map(|&(_, w)| w).sum();
            if total <= S::zero() {
                return Row::Uniform;
            }
            Row::Entries(
                neighbors
                    .into_iter()
                    .map(|(v, w)| (v, w / total))
                    .collect(),
            )
        })
        .collect();
    MarkovChain::with_teleport(n, rows, eta, Distribution::uniform(n), S::one())
}

/// Collects `n_samples` transitions from a single walk of the chain started
/// at a draw from its initial distribution. The result is a one-action
/// dataset (the walk chooses no actions and earns no rewards).
pub fn random_walk_dataset<S: Scalar>(
    chain: &MarkovChain<S>,
    n_samples: usize,
    seed: u64,
) -> Result<TransitionDataset<S>> {
    if n_samples == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = chain.mu0().sample(&mut rng);
    let mut records = Vec::with_capacity(n_samples);
    let mut cur = start;
    for _ in 0..n_samples {
        let next = chain.sample_next(cur, &mut rng);
        records.push(Transition {
            state: cur,
            action: 0,
            reward: S::zero(),
            next_state: next,
        });
        cur = next;
    }
    TransitionDataset::new(chain.n_states(), 1, records, vec![start], None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::STATIONARY_MAX_ITER;

    #[test]
    fn ba_graph_has_expected_edge_count_and_degrees() {
        let g: Graph<f64> = barabasi_albert(100, 4, 5, 0).unwrap();
        assert_eq!(g.n_vertices(), 100);
        // Clique on 5 plus 4 per arrival: 10 + 4 * 95.
        assert_eq!(g.n_edges(), 10 + 4 * 95);
        let adjacency = g.adjacency();
        for (v, neighbors) in adjacency.iter().enumerate() {
            assert!(neighbors.len() >= 4, "vertex {v} has degree {}", neighbors.len());
            let distinct: HashSet<usize> = neighbors.iter().map(|&(u, _)| u).collect();
            assert_eq!(distinct.len(), neighbors.len(), "parallel edge at {v}");
        }
    }

    #[test]
    fn ba_graph_is_deterministic_per_seed() {
        let a: Graph<f64> = barabasi_albert(50, 2, 3, 9).unwrap();
        let b: Graph<f64> = barabasi_albert(50, 2, 3, 9).unwrap();
        let c: Graph<f64> = barabasi_albert(50, 2, 3, 10).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn ba_rejects_bad_parameters() {
        assert!(barabasi_albert::<f64>(10, 0, 3, 0).is_err());
        assert!(barabasi_albert::<f64>(10, 4, 3, 0).is_err());
        assert!(barabasi_albert::<f64>(3, 2, 3, 0).is_err());
    }

    #[test]
    fn surfer_chain_rows_are_stochastic_and_teleport_mixes() {
        let g: Graph<f64> = Graph::directed(3, vec![(0, 1), (1, 2), (1, 0)]).unwrap();
        let chain = pagerank_chain(&g, 0.1).unwrap();
        for s in 0..3 {
            let total: f64 = (0..3).map(|t| chain.prob(s, t)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        // Vertex 2 dangles: uniform row.
        for t in 0..3 {
            assert!((chain.prob(2, t) - 1.0 / 3.0).abs() < 1e-12);
        }
        // Vertex 0 has one out-edge.
        assert!((chain.prob(0, 1) - (0.1 / 3.0 + 0.9)).abs() < 1e-12);
        assert!((chain.prob(0, 0) - 0.1 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_edges_shift_the_stationary_distribution() {
        let g: Graph<f64> = Graph::directed(2, vec![(0, 0), (0, 1), (1, 0), (1, 1)])
            .unwrap()
            .with_weights(vec![1.0, 3.0, 1.0, 1.0])
            .unwrap();
        let chain = pagerank_chain(&g, 0.0).unwrap();
        assert!((chain.prob(0, 1) - 0.75).abs() < 1e-12);
        let mu = chain
            .stationary(1.0, &Distribution::uniform(2), 1e-12, STATIONARY_MAX_ITER)
            .unwrap();
        assert!(mu.get(1) > mu.get(0));
    }

    #[test]
    fn undirected_chain_walks_edges_both_ways() {
        let g: Graph<f64> = Graph::undirected(3, vec![(0, 1), (1, 2)]).unwrap();
        let chain = pagerank_chain(&g, 0.0).unwrap();
        assert_eq!(chain.prob(1, 0), 0.5);
        assert_eq!(chain.prob(1, 2), 0.5);
        assert_eq!(chain.prob(2, 1), 1.0);
    }

    #[test]
    fn duplicate_undirected_edge_is_rejected_in_either_orientation() {
        assert!(Graph::<f64>::undirected(3, vec![(0, 1), (1, 0)]).is_err());
        assert!(Graph::<f64>::directed(3, vec![(0, 1), (1, 0)]).is_ok());
    }

    #[test]
    fn edge_list_round_trip_preserves_structure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.txt");
        let g: Graph<f64> = Graph::directed(3, vec![(0, 1), (1, 2), (2, 0)])
            .unwrap()
            .with_weights(vec![1.0, 2.0, 0.5])
            .unwrap();
        save_edge_list(&g, &path).unwrap();
        let loaded = load_edge_list::<f64>(&path).unwrap();
        assert_eq!(loaded.graph.n_vertices(), 3);
        assert_eq!(loaded.graph.n_edges(), 3);
        assert_eq!(loaded.graph.weights().unwrap(), &[1.0, 2.0, 0.5]);
        assert_eq!(loaded.ids, vec!["0", "1", "2"]);
    }

    #[test]
    fn edge_list_parses_labels_comments_and_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.txt");
        std::fs::write(
            &path,
            "# a comment\nalpha beta\n\nbeta gamma # trailing\nalpha beta\n",
        )
        .unwrap();
        let loaded = load_edge_list::<f64>(&path).unwrap();
        assert_eq!(loaded.ids, vec!["alpha", "beta", "gamma"]);
        // The duplicate alpha->beta line collapses.
        assert_eq!(loaded.graph.n_edges(), 2);
    }

    #[test]
    fn edge_list_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "a b\nc\n").unwrap();
        match load_edge_list::<f64>(&path).unwrap_err() {
            Error::EdgeListParse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
        std::fs::write(&path, "a b 1.0\nc d\n").unwrap();
        assert!(load_edge_list::<f64>(&path).is_err());
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(matches!(
            load_edge_list::<f64>(&path).unwrap_err(),
            Error::EmptyEdgeList { .. }
        ));
    }

    #[test]
    fn gaussian_weights_are_nonnegative_and_seeded() {
        let g: Graph<f64> = barabasi_albert(30, 2, 3, 1).unwrap();
        let a = g.clone().with_gaussian_weights(5).unwrap();
        let b = g.with_gaussian_weights(5).unwrap();
        assert_eq!(a.weights().unwrap(), b.weights().unwrap());
        assert!(a.weights().unwrap().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn random_walk_dataset_tracks_the_chain() {
        let g: Graph<f64> = barabasi_albert(20, 2, 3, 2).unwrap();
        let chain = pagerank_chain(&g, 0.1).unwrap();
        let data = random_walk_dataset(&chain, 500, 3).unwrap();
        assert_eq!(data.len(), 500);
        assert_eq!(data.n_actions(), 1);
        assert_eq!(data.initial_states().len(), 1);
        // Consecutive records chain together.
        let records = data.records();
        for pair in records.windows(2) {
            assert_eq!(pair[0].next_state, pair[1].state);
        }
    }
}
