//! Push-sum node state machines.
//!
//! A round is two steps: every node splits its `(s, w)` into shares
//! ([`outgoing_shares`]), then every node folds its retained share and the
//! shares received from its in-neighbors into the next state
//! ([`apply_round`]). The same two functions drive the conventional
//! algorithm (fixed weights), the randomized two-phase algorithm and the
//! encrypted variant; only the weights and the transport differ.

use thiserror::Error;

use crate::graph::{DirectedGraph, NodeId};
use crate::weights::{FixedWeights, RoundWeights, WeightError, WeightPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("weights for node {weights_node} round {weights_round} applied to node {state_node} round {state_round}")]
    RoundMismatch {
        state_node: NodeId,
        state_round: usize,
        weights_node: NodeId,
        weights_round: usize,
    },
    #[error("node {node} is missing the round-{round} share from in-neighbor {from}")]
    MissingShare { node: NodeId, round: usize, from: NodeId },
    #[error("node {node} received an unexpected share from {from} for round {round}")]
    UnexpectedShare { node: NodeId, round: usize, from: NodeId },
    #[error("node {node} reached w = 0 at round {round}")]
    DivisionByZero { node: NodeId, round: usize },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("expected {expected} initial values, got {got}")]
    InitialValueCount { expected: usize, got: usize },
    #[error(transparent)]
    Weights(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub x0: f64,
    pub s: f64,
    pub w: f64,
    pub pi: f64,
    pub round: usize,
}

impl NodeState {
    pub fn new(node_id: NodeId, x0: f64) -> Self {
        Self { node_id, x0, s: x0, w: 1.0, pi: x0, round: 0 }
    }
}

/// One share sent along a directed link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShareMessage {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub round: usize,
    pub s_share: f64,
    pub w_share: f64,
}

/// The part of `(s, w)` a node keeps for itself in a round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retained {
    pub s: f64,
    pub w: f64,
}

/// Splits the node's state according to `weights`. Messages are ordered by
/// receiver.
pub fn outgoing_shares(
    state: &NodeState,
    weights: &RoundWeights,
) -> Result<(Vec<ShareMessage>, Retained), ConsensusError> {
    if weights.round != state.round || weights.node_id != state.node_id {
        return Err(ConsensusError::RoundMismatch {
            state_node: state.node_id,
            state_round: state.round,
            weights_node: weights.node_id,
            weights_round: weights.round,
        });
    }
    let me = state.node_id;
    let messages = weights
        .s_weights
        .keys()
        .filter(|&&j| j != me)
        .map(|&j| ShareMessage {
            sender: me,
            receiver: j,
            round: state.round,
            s_share: weights.s_weight(j) * state.s,
            w_share: weights.w_weight(j) * state.w,
        })
        .collect();
    let retained = Retained { s: weights.s_weight(me) * state.s, w: weights.w_weight(me) * state.w };
    Ok((messages, retained))
}

/// Folds one round of received shares into the node state. `received` must
/// hold exactly one message per in-neighbor; they are summed in sender order
/// so the result does not depend on arrival order.
pub fn apply_round(
    state: &NodeState,
    in_neighbors: &[NodeId],
    received: &[ShareMessage],
    retained: Retained,
) -> Result<NodeState, ConsensusError> {
    let me = state.node_id;
    let round = state.round;
    let mut ordered: Vec<&ShareMessage> = received.iter().collect();
    ordered.sort_by_key(|m| m.sender);
    for pair in ordered.windows(2) {
        if pair[0].sender == pair[1].sender {
            return Err(ConsensusError::UnexpectedShare { node: me, round, from: pair[1].sender });
        }
    }
    for m in &ordered {
        if m.receiver != me || m.round != round || in_neighbors.binary_search(&m.sender).is_err() {
            return Err(ConsensusError::UnexpectedShare { node: me, round, from: m.sender });
        }
    }
    if let Some(&from) = in_neighbors.iter().find(|j| !ordered.iter().any(|m| m.sender == **j)) {
        return Err(ConsensusError::MissingShare { node: me, round, from });
    }

    let mut s = retained.s;
    let mut w = retained.w;
    for m in ordered {
        s += m.s_share;
        w += m.w_share;
    }
    if w == 0.0 {
        return Err(ConsensusError::DivisionByZero { node: me, round: round + 1 });
    }
    Ok(NodeState { node_id: me, x0: state.x0, s, w, pi: s / w, round: round + 1 })
}

/// Network-wide states, one snapshot per round starting at round 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub rounds: Vec<Vec<NodeState>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn last(&self) -> Option<&[NodeState]> {
        self.rounds.last().map(Vec::as_slice)
    }

    pub fn s_at(&self, round: usize) -> Vec<f64> {
        self.rounds[round].iter().map(|n| n.s).collect()
    }

    pub fn w_at(&self, round: usize) -> Vec<f64> {
        self.rounds[round].iter().map(|n| n.w).collect()
    }

    pub fn pi_at(&self, round: usize) -> Vec<f64> {
        self.rounds[round].iter().map(|n| n.pi).collect()
    }
}

/// Executes one synchronous round over all nodes and returns the next states
/// together with every message sent.
pub fn synchronous_round(
    graph: &DirectedGraph,
    states: &[NodeState],
    weights: &[RoundWeights],
) -> Result<(Vec<NodeState>, Vec<ShareMessage>), ConsensusError> {
    let n = graph.node_count();
    let mut inbox: Vec<Vec<ShareMessage>> = vec![Vec::new(); n];
    let mut retained = Vec::with_capacity(n);
    let mut sent = Vec::new();
    for (state, rw) in states.iter().zip(weights) {
        let (msgs, keep) = outgoing_shares(state, rw)?;
        for m in msgs {
            inbox[m.receiver].push(m);
            sent.push(m);
        }
        retained.push(keep);
    }
    let next = states
        .iter()
        .zip(retained)
        .map(|(state, keep)| apply_round(state, graph.in_neighbors(state.node_id), &inbox[state.node_id], keep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((next, sent))
}

/// Conventional push-sum with time-invariant weights shared by `s` and `w`.
pub fn run_algorithm0(
    graph: &DirectedGraph,
    x0: &[f64],
    fixed_weights: &FixedWeights,
    rounds: usize,
) -> Result<Trajectory, ConsensusError> {
    if !graph.is_strongly_connected() {
        return Err(ConsensusError::NotStronglyConnected);
    }
    if x0.len() != graph.node_count() {
        return Err(ConsensusError::InitialValueCount { expected: graph.node_count(), got: x0.len() });
    }
    let mut policy = fixed_weights.clone();
    let mut states: Vec<NodeState> = x0.iter().enumerate().map(|(i, &x)| NodeState::new(i, x)).collect();
    let mut trajectory = Trajectory { rounds: vec![states.clone()] };
    for k in 0..rounds {
        let weights = (0..graph.node_count())
            .map(|i| policy.round_weights(i, k, graph.out_neighbors(i)))
            .collect::<Result<Vec<_>, _>>()?;
        states = synchronous_round(graph, &states, &weights)?.0;
        trajectory.rounds.push(states.clone());
    }
    Ok(trajectory)
}
