//! Observed malware model: an `Init`-rooted call graph with visit
//! counts, counted directed edges and Dirichlet transition posteriors.
//! This is the object the analyzer builds up and the classifier
//! consumes, exportable as DOT and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rl::ActionId;
use crate::world::{ApiCallId, Trace, INIT};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("dirichlet prior pseudo-count must be positive and finite, got {0}")]
    InvalidPrior(f64),
    #[error("trace must start at Init")]
    MalformedTrace,
    #[error("node {0:?} is not in the graph")]
    UnknownNode(ApiCallId),
    #[error("graph document is invalid: {0}")]
    InvalidDocument(String),
    #[error("graph JSON failed to parse: {0}")]
    Json(#[from] serde_json::Error),
}

/// Per-node observation counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    /// Times the node appeared in an ingested trace.
    pub visits: u64,
    /// Times each trigger action preceded a trace through this node.
    pub triggers: BTreeMap<ActionId, u64>,
}

/// Counts of nodes and edges a trace contributed that the graph had
/// never seen before.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub new_nodes: u64,
    pub new_edges: u64,
}

/// The observed call graph. `Init` is present from construction; every
/// ingested transition increments exactly one edge counter, so the
/// total edge-count mass always equals the number of ingested
/// transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CallGraph {
    kappa: f64,
    nodes: BTreeMap<ApiCallId, NodeStats>,
    edges: BTreeMap<(ApiCallId, ApiCallId), u64>,
    total_transitions: u64,
}

impl Default for CallGraph {
    fn default() -> Self {
        Self::new()
    }
}

impl CallGraph {
    /// Empty graph with the default add-one Dirichlet prior.
    pub fn new() -> Self {
        Self::with_prior(1.0).unwrap()
    }

    /// Empty graph with pseudo-count `kappa` per successor category.
    pub fn with_prior(kappa: f64) -> Result<Self, GraphError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(GraphError::InvalidPrior(kappa));
        }
        let mut nodes = BTreeMap::new();
        nodes.insert(INIT, NodeStats::default());
        Ok(Self { kappa, nodes, edges: BTreeMap::new(), total_transitions: 0 })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Total number of ingested transitions (edge traversals).
    pub fn total_transitions(&self) -> u64 {
        self.total_transitions
    }

    pub fn contains_node(&self, node: ApiCallId) -> bool {
        self.nodes.contains_key(&node)
    }

    pub fn visits(&self, node: ApiCallId) -> u64 {
        self.nodes.get(&node).map_or(0, |s| s.visits)
    }

    pub fn edge(&self, from: ApiCallId, to: ApiCallId) -> u64 {
        *self.edges.get(&(from, to)).unwrap_or(&0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (ApiCallId, &NodeStats)> {
        self.nodes.iter().map(|(&id, stats)| (id, stats))
    }

    pub fn edges(&self) -> impl Iterator<Item = (ApiCallId, ApiCallId, u64)> + '_ {
        self.edges.iter().map(|(&(u, v), &c)| (u, v, c))
    }

    /// Observed successors of `u` with their counts.
    pub fn successors(&self, u: ApiCallId) -> impl Iterator<Item = (ApiCallId, u64)> + '_ {
        self.edges
            .range((u, ApiCallId(0))..=(u, ApiCallId(u32::MAX)))
            .map(|(&(_, v), &c)| (v, c))
    }

    /// Fold one trace into the graph: every consecutive call pair
    /// increments an edge counter, every call increments its node's
    /// visit and trigger counters. Returns how many nodes and edges
    /// were new. A malformed trace leaves the graph untouched.
    pub fn ingest_trace(
        &mut self,
        triggered_by: ActionId,
        trace: &Trace,
    ) -> Result<NoveltyReport, GraphError> {
        let calls = trace.calls();
        if calls.first() != Some(&INIT) {
            return Err(GraphError::MalformedTrace);
        }

        let mut new_nodes = 0u64;
        let mut seen_new: Vec<ApiCallId> = Vec::new();
        for &call in calls {
            if !self.nodes.contains_key(&call) && !seen_new.contains(&call) {
                seen_new.push(call);
                new_nodes += 1;
            }
        }
        let mut new_edges = 0u64;
        let mut seen_new_edges: Vec<(ApiCallId, ApiCallId)> = Vec::new();
        for pair in calls.windows(2) {
            let key = (pair[0], pair[1]);
            if !self.edges.contains_key(&key) && !seen_new_edges.contains(&key) {
                seen_new_edges.push(key);
                new_edges += 1;
            }
        }

        for &call in calls {
            let stats = self.nodes.entry(call).or_default();
            stats.visits += 1;
            *stats.triggers.entry(triggered_by).or_insert(0) += 1;
        }
        for pair in calls.windows(2) {
            *self.edges.entry((pair[0], pair[1])).or_insert(0) += 1;
            self.total_transitions += 1;
        }

        Ok(NoveltyReport { new_nodes, new_edges })
    }

    /// Dirichlet posterior-mean transition probability from `u` to `v`.
    ///
    /// The categories of the posterior are the observed successors of
    /// `u` plus one reserved "unknown successor" slot holding prior
    /// mass `kappa`; any `v` outside the observed support reads the
    /// unknown slot. With no observations the unknown slot carries all
    /// the mass.
    pub fn transition_probability(&self, u: ApiCallId, v: ApiCallId) -> Result<f64, GraphError> {
        if !self.nodes.contains_key(&u) {
            return Err(GraphError::UnknownNode(u));
        }
        let mut out_mass = 0u64;
        let mut support = 0usize;
        let mut observed = 0u64;
        for (succ, count) in self.successors(u) {
            out_mass += count;
            support += 1;
            if succ == v {
                observed = count;
            }
        }
        let denom = out_mass as f64 + self.kappa * (support as f64 + 1.0);
        if observed > 0 {
            Ok((observed as f64 + self.kappa) / denom)
        } else {
            Ok(self.kappa / denom)
        }
    }

    /// Fixed-dimension feature vector: a normalized node-visit
    /// histogram over the vocabulary followed by `pair_dim` hashed
    /// buckets accumulating edge transition probabilities. Sparse form;
    /// indices are strictly increasing.
    pub fn sparse_features(&self, vocab_size: usize, pair_dim: usize) -> Vec<(u32, f64)> {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        let total_visits: u64 = self.nodes.values().map(|s| s.visits).sum();
        if total_visits == 0 {
            // Nothing ingested yet: all probability mass sits on Init.
            acc.insert(INIT.0, 1.0);
        } else {
            for (&node, stats) in &self.nodes {
                if (node.0 as usize) < vocab_size && stats.visits > 0 {
                    acc.insert(node.0, stats.visits as f64 / total_visits as f64);
                }
            }
        }
        for (&(u, v), _) in &self.edges {
            let p = self
                .transition_probability(u, v)
                .expect("edge source is a graph node");
            let bucket = (fnv1a_pair(u.0, v.0) % pair_dim as u64) as u32;
            *acc.entry(vocab_size as u32 + bucket).or_insert(0.0) += p;
        }
        acc.into_iter().collect()
    }

    /// Dense counterpart of [`CallGraph::sparse_features`], dimension
    /// `vocab_size + pair_dim`.
    pub fn features(&self, vocab_size: usize, pair_dim: usize) -> Vec<f64> {
        let mut dense = vec![0.0; vocab_size + pair_dim];
        for (idx, value) in self.sparse_features(vocab_size, pair_dim) {
            dense[idx as usize] = value;
        }
        dense
    }

    /// Graphviz DOT rendering with edge counts and posterior-mean
    /// transition probabilities as labels.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph call_graph {\n  rankdir=LR;\n");
        for &node in self.nodes.keys() {
            if node == INIT {
                let _ = writeln!(out, "  \"{}\" [shape=doublecircle];", node_name(node));
            } else {
                let _ = writeln!(out, "  \"{}\";", node_name(node));
            }
        }
        for (&(u, v), &count) in &self.edges {
            let p = self.transition_probability(u, v).expect("edge source exists");
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{} ({:.3})\"];",
                node_name(u),
                node_name(v),
                count,
                p
            );
        }
        out.push_str("}\n");
        out
    }

    /// JSON rendering; see `docs/formats.md` for the schema.
    pub fn to_json(&self) -> String {
        self.to_json_with_seed(None)
    }

    /// JSON rendering carrying the seed that produced the graph.
    pub fn to_json_with_seed(&self, seed: Option<u64>) -> String {
        serde_json::to_string_pretty(&GraphDoc::from_graph(self, seed))
            .expect("graph document serializes")
    }

    /// Parse a graph back from its JSON rendering.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let doc: GraphDoc = serde_json::from_str(text)?;
        doc.into_graph()
    }
}

fn node_name(id: ApiCallId) -> String {
    if id == INIT {
        "init".to_string()
    } else {
        format!("api_{}", id.0)
    }
}

/// FNV-1a over the byte representation of an edge, for stable feature
/// hashing across platforms and releases.
fn fnv1a_pair(u: u32, v: u32) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in u.to_le_bytes().into_iter().chain(v.to_le_bytes()) {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

/// On-disk JSON form of a [`CallGraph`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    kappa: f64,
    total_transitions: u64,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: u32,
    visits: u64,
    triggers: Vec<TriggerDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriggerDoc {
    action: u32,
    count: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: u32,
    to: u32,
    count: u64,
}

impl GraphDoc {
    fn from_graph(g: &CallGraph, seed: Option<u64>) -> Self {
        Self {
            schema_version: GRAPH_SCHEMA_VERSION,
            seed,
            kappa: g.kappa,
            total_transitions: g.total_transitions,
            nodes: g
                .nodes
                .iter()
                .map(|(&id, stats)| NodeDoc {
                    id: id.0,
                    visits: stats.visits,
                    triggers: stats
                        .triggers
                        .iter()
                        .map(|(&a, &c)| TriggerDoc { action: a.0, count: c })
                        .collect(),
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|(&(u, v), &c)| EdgeDoc { from: u.0, to: v.0, count: c })
                .collect(),
        }
    }

    fn into_graph(self) -> Result<CallGraph, GraphError> {
        if self.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(GraphError::InvalidDocument(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        let mut graph = CallGraph::with_prior(self.kappa)?;
        for node in self.nodes {
            let stats = graph.nodes.entry(ApiCallId(node.id)).or_default();
            stats.visits = node.visits;
            for t in node.triggers {
                stats.triggers.insert(ActionId(t.action), t.count);
            }
        }
        if !graph.nodes.contains_key(&INIT) {
            return Err(GraphError::InvalidDocument("Init node missing".into()));
        }
        let mut mass = 0u64;
        for edge in self.edges {
            let from = ApiCallId(edge.from);
            let to = ApiCallId(edge.to);
            if !graph.nodes.contains_key(&from) || !graph.nodes.contains_key(&to) {
                return Err(GraphError::InvalidDocument(format!(
                    "edge {} -> {} references an unknown node",
                    edge.from, edge.to
                )));
            }
            if edge.count == 0 {
                return Err(GraphError::InvalidDocument(format!(
                    "edge {} -> {} has zero count",
                    edge.from, edge.to
                )));
            }
            mass += edge.count;
            graph.edges.insert((from, to), edge.count);
        }
        if mass != self.total_transitions {
            return Err(GraphError::InvalidDocument(format!(
                "edge-count mass {mass} does not match total_transitions {}",
                self.total_transitions
            )));
        }
        graph.total_transitions = self.total_transitions;
        Ok(graph)
    }
}
