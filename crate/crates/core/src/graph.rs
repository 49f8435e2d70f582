//! Communication topology and averaging consensus.
//!
//! Weights follow the Metropolis–Hastings rule, which only needs each node to
//! know its neighbours' degrees and always yields a symmetric, doubly
//! stochastic matrix on an undirected graph.

use std::collections::{BTreeSet, HashMap, VecDeque};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("communication graph has no nodes")]
    Empty,
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("edge ({0}, {1}) references an unknown node")]
    UnknownNode(u32, u32),
    #[error("self-loop on node {0}")]
    SelfLoop(u32),
    #[error("communication graph is disconnected: node {0} is unreachable from node {1}")]
    Disconnected(u32, u32),
    #[error("state has {got} entries but the graph has {expected} nodes")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("consensus did not converge in {iterations} rounds (spread {spread:e})")]
    NotConverged { iterations: usize, spread: f64 },
}

/// Undirected communication graph with its consensus weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CommGraph {
    node_ids: Vec<u32>,
    edges: Vec<(u32, u32)>,
    weights: Vec<Vec<f64>>,
    // neighbour index and weight, self excluded
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl CommGraph {
    pub fn node_ids(&self) -> &[u32] {
        &self.node_ids
    }

    /// Edges as given (deduplicated, each stored once with the smaller id first).
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    pub fn index_of(&self, id: u32) -> Option<usize> {
        self.node_ids.iter().position(|&n| n == id)
    }

    /// Dense weight matrix, rows and columns in `node_ids` order.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i][j]
    }

    /// Neighbours of node index `i` together with ω_ij.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Weight matrix as CSV, one row per line.
    pub fn weights_csv(&self) -> String {
        let mut out = String::new();
        for row in &self.weights {
            let line: Vec<String> = row.iter().map(|w| w.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

/// Builds a [`CommGraph`] with Metropolis–Hastings weights
/// `ω_ij = 1 / (1 + max(deg i, deg j))` on edges and the remainder on the diagonal.
pub fn metropolis_weights(edges: &[(u32, u32)], node_ids: &[u32]) -> Result<CommGraph, GraphError> {
    if node_ids.is_empty() {
        return Err(GraphError::Empty);
    }
    let mut index = HashMap::with_capacity(node_ids.len());
    for (k, &id) in node_ids.iter().enumerate() {
        if index.insert(id, k).is_some() {
            return Err(GraphError::DuplicateNode(id));
        }
    }

    let mut edge_set = BTreeSet::new();
    for &(a, b) in edges {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        if !index.contains_key(&a) || !index.contains_key(&b) {
            return Err(GraphError::UnknownNode(a, b));
        }
        edge_set.insert((a.min(b), a.max(b)));
    }
    let edges: Vec<(u32, u32)> = edge_set.into_iter().collect();

    let n = node_ids.len();
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in &edges {
        let (i, j) = (index[&a], index[&b]);
        adjacency[i].push(j);
        adjacency[j].push(i);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }

    // breadth-first reachability from the first node
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(GraphError::Disconnected(node_ids[k], node_ids[0]));
    }

    let mut weights = vec![vec![0.0; n]; n];
    let mut neighbors = vec![Vec::new(); n];
    for i in 0..n {
        let mut off_diagonal = 0.0;
        for &j in &adjacency[i] {
            let w = 1.0 / (1.0 + adjacency[i].len().max(adjacency[j].len()) as f64);
            weights[i][j] = w;
            neighbors[i].push((j, w));
            off_diagonal += w;
        }
        weights[i][i] = 1.0 - off_diagonal;
    }

    Ok(CommGraph { node_ids: node_ids.to_vec(), edges, weights, neighbors })
}

/// Per-node scalar state of an averaging-consensus run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusState {
    pub values: Vec<f64>,
    pub iteration: usize,
}

impl ConsensusState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, iteration: 0 }
    }

    /// max − min over nodes.
    pub fn spread(&self) -> f64 {
        spread(&self.values)
    }
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// One synchronous round `x_i ← x_i + Σ_{j∈N_i} ω_ij (x_j − x_i)`.
///
/// Every node reads only the previous round's values, so the result does not
/// depend on evaluation order.
pub fn consensus_round(state: &ConsensusState, graph: &CommGraph) -> Result<ConsensusState, GraphError> {
    if state.values.len() != graph.len() {
        return Err(GraphError::DimensionMismatch { expected: graph.len(), got: state.values.len() });
    }
    Ok(ConsensusState {
        values: mix(&state.values, graph),
        iteration: state.iteration + 1,
    })
}

pub(crate) fn mix(values: &[f64], graph: &CommGraph) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let xi = values[i];
            xi + graph.neighbors(i).iter().map(|&(j, w)| w * (values[j] - xi)).sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOutcome {
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Iterates [`consensus_round`] until the node spread drops to `tol` or below.
///
/// A spread of at most `tol` bounds every node's distance from the conserved
/// mean by `tol`, so nodes can stop without knowing the true average.
pub fn run_consensus(
    initial: &[f64],
    graph: &CommGraph,
    tol: f64,
    max_iters: usize,
) -> Result<ConsensusOutcome, GraphError> {
    let mut state = ConsensusState::new(initial.to_vec());
    if state.values.len() != graph.len() {
        return Err(GraphError::DimensionMismatch { expected: graph.len(), got: state.values.len() });
    }
    while state.spread() > tol {
        if state.iteration >= max_iters {
            return Err(GraphError::NotConverged { iterations: state.iteration, spread: state.spread() });
        }
        state = consensus_round(&state, graph)?;
    }
    Ok(ConsensusOutcome { values: state.values, iterations: state.iteration })
}
