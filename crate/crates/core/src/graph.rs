//! Directed communication graphs.
//!
//! Edge convention: an edge `(i, j)` means node `j` can send to node `i`
//! (receiver first, sender second). Everything outside this module goes
//! through [`DirectedGraph::out_neighbors`] / [`DirectedGraph::in_neighbors`]
//! so the convention never leaks. When building graphs from configuration,
//! prefer [`DirectedGraph::from_links`], which takes `(from, to)` pairs.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

/// Dense node identifier in `[0, N)`.
pub type NodeId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("self-edge on node {0}")]
    SelfEdge(NodeId),
    #[error("node {node} out of range for a graph of {n_nodes} nodes")]
    NodeOutOfRange { node: NodeId, n_nodes: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n_nodes: usize,
    out_neighbors: Vec<Vec<NodeId>>,
    in_neighbors: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl DirectedGraph {
    /// Builds a graph from edges in receiver-first form: `(i, j)` means `j -> i`.
    pub fn from_edges(
        n_nodes: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        Self::from_links(n_nodes, edges.into_iter().map(|(i, j)| (j, i)))
    }

    /// Builds a graph from directed links `(from, to)`. Duplicates are merged.
    pub fn from_links(
        n_nodes: usize,
        links: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        if n_nodes == 0 {
            return Err(GraphError::Empty);
        }
        let mut out_sets = vec![BTreeSet::new(); n_nodes];
        let mut in_sets = vec![BTreeSet::new(); n_nodes];
        for (from, to) in links {
            for node in [from, to] {
                if node >= n_nodes {
                    return Err(GraphError::NodeOutOfRange { node, n_nodes });
                }
            }
            if from == to {
                return Err(GraphError::SelfEdge(from));
            }
            out_sets[from].insert(to);
            in_sets[to].insert(from);
        }
        let edge_count = out_sets.iter().map(BTreeSet::len).sum();
        Ok(Self {
            n_nodes,
            out_neighbors: out_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            in_neighbors: in_sets.into_iter().map(|s| s.into_iter().collect()).collect(),
            edge_count,
        })
    }

    /// Directed ring `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n_nodes: usize) -> Result<Self, GraphError> {
        let links = if n_nodes > 1 {
            (0..n_nodes).map(|i| (i, (i + 1) % n_nodes)).collect()
        } else {
            Vec::new()
        };
        Self::from_links(n_nodes, links)
    }

    /// Every ordered pair of distinct nodes is linked.
    pub fn complete(n_nodes: usize) -> Result<Self, GraphError> {
        let links = (0..n_nodes)
            .flat_map(|i| (0..n_nodes).filter(move |&j| j != i).map(move |j| (i, j)));
        Self::from_links(n_nodes, links.collect::<Vec<_>>())
    }

    /// Random strongly connected graph: a directed ring over a random
    /// permutation of the nodes, plus each remaining link with probability
    /// `extra_link_prob`.
    pub fn random_strongly_connected<R: Rng + ?Sized>(
        n_nodes: usize,
        extra_link_prob: f64,
        rng: &mut R,
    ) -> Result<Self, GraphError> {
        let mut order: Vec<NodeId> = (0..n_nodes).collect();
        order.shuffle(rng);
        let mut links = BTreeSet::new();
        if n_nodes > 1 {
            for w in 0..n_nodes {
                links.insert((order[w], order[(w + 1) % n_nodes]));
            }
        }
        for from in 0..n_nodes {
            for to in 0..n_nodes {
                if from != to && !links.contains(&(from, to)) && rng.gen_bool(extra_link_prob) {
                    links.insert((from, to));
                }
            }
        }
        Self::from_links(n_nodes, links)
    }

    pub fn node_count(&self) -> usize {
        self.n_nodes
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Nodes that receive messages from `node`, sorted ascending.
    pub fn out_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.out_neighbors[node]
    }

    /// Nodes that send messages to `node`, sorted ascending.
    pub fn in_neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.in_neighbors[node]
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_neighbors[node].len()
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_neighbors[node].len()
    }

    pub fn has_link(&self, from: NodeId, to: NodeId) -> bool {
        from < self.n_nodes && self.out_neighbors[from].binary_search(&to).is_ok()
    }

    /// All links as `(from, to)`, ordered by sender then receiver.
    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_neighbors
            .iter()
            .enumerate()
            .flat_map(|(from, outs)| outs.iter().map(move |&to| (from, to)))
    }

    /// Union of in- and out-neighbors of `node`.
    pub fn neighborhood(&self, node: NodeId) -> BTreeSet<NodeId> {
        self.out_neighbors[node]
            .iter()
            .chain(&self.in_neighbors[node])
            .copied()
            .collect()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out_neighbors.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// True iff every node reaches every other node along directed links.
    pub fn is_strongly_connected(&self) -> bool {
        // forward reachability from node 0 plus reachability of node 0 from everyone
        self.reaches_all(0, &self.out_neighbors) && self.reaches_all(0, &self.in_neighbors)
    }

    fn reaches_all(&self, start: NodeId, adjacency: &[Vec<NodeId>]) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    queue.push_back(v);
                }
            }
        }
        count == self.n_nodes
    }
}
