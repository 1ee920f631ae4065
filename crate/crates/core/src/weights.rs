//! Per-round random coupling weights.
//!
//! Rounds `k <= K` (phase A) draw unconstrained real s-weights that sum to
//! one and keep the whole w-mass at home. Rounds `k >= K + 1` (phase B) draw
//! one set of weights in `(epsilon, 1)` summing to one and use it for both s
//! and w.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::graph::{DirectedGraph, NodeId};
use crate::rng::{node_rng, ProtocolRng, Stream};

/// Absolute tolerance on column sums.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("epsilon {epsilon} must lie in (0, 1/{slots}) for a node with {slots} weight slots")]
    InvalidEpsilon { epsilon: f64, slots: usize },
    #[error("phase-A range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("point is not on the unit simplex")]
    NotOnSimplex,
    #[error("no weights scheduled for node {node} at round {round}")]
    Unscheduled { node: NodeId, round: usize },
    #[error("fixed weight matrix invalid: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Last round of phase A.
    pub big_k: usize,
    pub epsilon: f64,
    /// Half-width of the phase-A sampling interval.
    pub phase_a_range: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self { big_k: 1, epsilon: 0.01, phase_a_range: 10.0 }
    }
}

impl WeightParams {
    pub fn new(big_k: usize, epsilon: f64, phase_a_range: f64) -> Self {
        Self { big_k, epsilon, phase_a_range }
    }

    pub fn is_phase_a(&self, round: usize) -> bool {
        round <= self.big_k
    }

    /// Upper bound on epsilon for `graph`: `1 / (max out-degree + 1)`.
    pub fn epsilon_bound(graph: &DirectedGraph) -> f64 {
        1.0 / (graph.max_out_degree() + 1) as f64
    }

    pub fn validate_for(&self, graph: &DirectedGraph) -> Result<(), WeightError> {
        self.check_slots(graph.max_out_degree() + 1)
    }

    fn check_slots(&self, slots: usize) -> Result<(), WeightError> {
        if !(self.phase_a_range.is_finite() && self.phase_a_range > 0.0) {
            return Err(WeightError::InvalidRange(self.phase_a_range));
        }
        if !(self.epsilon > 0.0 && self.epsilon * (slots as f64) < 1.0) {
            return Err(WeightError::InvalidEpsilon { epsilon: self.epsilon, slots });
        }
        Ok(())
    }
}

/// One node's outgoing coupling weights for one round: a column of
/// `P_s(k)` and `P_w(k)` restricted to the node itself and its out-neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundWeights {
    pub node_id: NodeId,
    pub round: usize,
    pub s_weights: BTreeMap<NodeId, f64>,
    pub w_weights: BTreeMap<NodeId, f64>,
}

impl RoundWeights {
    pub fn s_weight(&self, target: NodeId) -> f64 {
        self.s_weights.get(&target).copied().unwrap_or(0.0)
    }

    pub fn w_weight(&self, target: NodeId) -> f64 {
        self.w_weights.get(&target).copied().unwrap_or(0.0)
    }

    pub fn s_sum(&self) -> f64 {
        self.s_weights.values().sum()
    }

    pub fn w_sum(&self) -> f64 {
        self.w_weights.values().sum()
    }
}

/// Affine map from the unit simplex onto `{p : p_j > eps, sum p = 1}`:
/// `p_j = eps + d_j (1 - m eps)`.
pub fn phase_b_map(simplex_point: &[f64], epsilon: f64) -> Result<Vec<f64>, WeightError> {
    let m = simplex_point.len();
    if !(epsilon > 0.0 && epsilon * (m as f64) < 1.0) {
        return Err(WeightError::InvalidEpsilon { epsilon, slots: m });
    }
    let sum: f64 = simplex_point.iter().sum();
    if simplex_point.iter().any(|&d| !(d >= 0.0)) || (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(WeightError::NotOnSimplex);
    }
    let scale = 1.0 - m as f64 * epsilon;
    Ok(simplex_point.iter().map(|d| epsilon + d * scale).collect())
}

/// Uniform point on the unit simplex with `m` coordinates (sorted-gap method).
fn sample_simplex<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..m.saturating_sub(1)).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut prev = 0.0;
    let mut gaps = Vec::with_capacity(m);
    for c in cuts {
        gaps.push(c - prev);
        prev = c;
    }
    gaps.push(1.0 - prev);
    gaps
}

/// Draws one round of coupling weights for `node_id`.
pub fn generate_round_weights<R: Rng + ?Sized>(
    node_id: NodeId,
    round: usize,
    out_neighbors: &[NodeId],
    params: &WeightParams,
    rng: &mut R,
) -> Result<RoundWeights, WeightError> {
    let slots = out_neighbors.len() + 1;
    params.check_slots(slots)?;

    let others: Vec<f64> = if params.is_phase_a(round) {
        let range = params.phase_a_range;
        let raw: Vec<f64> = (0..slots).map(|_| rng.gen_range(-range..range)).collect();
        let shift = (1.0 - raw.iter().sum::<f64>()) / slots as f64;
        raw[1..].iter().map(|v| v + shift).collect()
    } else if slots == 1 {
        Vec::new()
    } else {
        loop {
            let mapped = phase_b_map(&sample_simplex(slots, rng), params.epsilon)?;
            let others = mapped[1..].to_vec();
            let own = 1.0 - others.iter().sum::<f64>();
            // boundary hits have probability zero but the interval is open
            let all = std::iter::once(own).chain(others.iter().copied());
            if all.into_iter().all(|p| p > params.epsilon && p < 1.0) {
                break others;
            }
        }
    };

    let own = 1.0 - others.iter().sum::<f64>();
    let mut s_weights = BTreeMap::new();
    s_weights.insert(node_id, own);
    for (&j, &p) in out_neighbors.iter().zip(&others) {
        s_weights.insert(j, p);
    }
    let w_weights = if params.is_phase_a(round) {
        s_weights
            .keys()
            .map(|&j| (j, if j == node_id { 1.0 } else { 0.0 }))
            .collect()
    } else {
        s_weights.clone()
    };
    Ok(RoundWeights { node_id, round, s_weights, w_weights })
}

/// Source of per-round coupling weights for every node.
pub trait WeightPolicy: Send {
    fn round_weights(
        &mut self,
        node: NodeId,
        round: usize,
        out_neighbors: &[NodeId],
    ) -> Result<RoundWeights, WeightError>;
}

/// Random two-phase weights with one independent stream per node.
pub struct RandomWeights {
    params: WeightParams,
    rngs: Vec<ProtocolRng>,
}

impl RandomWeights {
    pub fn new(params: WeightParams, n_nodes: usize, seed: u64) -> Self {
        let rngs = (0..n_nodes).map(|i| node_rng(seed, i, Stream::Weights)).collect();
        Self { params, rngs }
    }
}

impl WeightPolicy for RandomWeights {
    fn round_weights(
        &mut self,
        node: NodeId,
        round: usize,
        out_neighbors: &[NodeId],
    ) -> Result<RoundWeights, WeightError> {
        generate_round_weights(node, round, out_neighbors, &self.params, &mut self.rngs[node])
    }
}

/// Time-invariant weights shared by s and w (conventional push-sum).
#[derive(Debug, Clone)]
pub struct FixedWeights {
    columns: Vec<BTreeMap<NodeId, f64>>,
}

impl FixedWeights {
    /// `p_ij = 1 / (D_j^out + 1)` on every supported entry.
    pub fn uniform(graph: &DirectedGraph) -> Self {
        let columns = (0..graph.node_count())
            .map(|j| {
                let p = 1.0 / (graph.out_degree(j) + 1) as f64;
                std::iter::once(j)
                    .chain(graph.out_neighbors(j).iter().copied())
                    .map(|i| (i, p))
                    .collect()
            })
            .collect();
        Self { columns }
    }

    /// From a dense matrix with `matrix[i][j] = p_ij`. Support must be exactly
    /// the links plus the diagonal, with entries in `(0, 1]` and columns
    /// summing to one.
    pub fn from_matrix(graph: &DirectedGraph, matrix: &[Vec<f64>]) -> Result<Self, WeightError> {
        let n = graph.node_count();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return Err(WeightError::InvalidMatrix(format!("expected {n}x{n}")));
        }
        let mut columns = Vec::with_capacity(n);
        for j in 0..n {
            let mut col = BTreeMap::new();
            for (i, row) in matrix.iter().enumerate() {
                let p = row[j];
                let supported = i == j || graph.has_link(j, i);
                if supported {
                    if !(p > 0.0 && p <= 1.0) {
                        return Err(WeightError::InvalidMatrix(format!("p[{i}][{j}] = {p} outside (0, 1]")));
                    }
                    col.insert(i, p);
                } else if p != 0.0 {
                    return Err(WeightError::InvalidMatrix(format!("p[{i}][{j}] = {p} off the graph support")));
                }
            }
            let sum: f64 = col.values().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(WeightError::InvalidMatrix(format!("column {j} sums to {sum}")));
            }
            columns.push(col);
        }
        Ok(Self { columns })
    }
}

impl WeightPolicy for FixedWeights {
    fn round_weights(
        &mut self,
        node: NodeId,
        round: usize,
        _out_neighbors: &[NodeId],
    ) -> Result<RoundWeights, WeightError> {
        let col = self.columns[node].clone();
        Ok(RoundWeights { node_id: node, round, s_weights: col.clone(), w_weights: col })
    }
}

/// Weights recorded from a previous execution, indexed `[round][node]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightSchedule {
    pub rounds: Vec<Vec<RoundWeights>>,
}

impl WeightSchedule {
    pub fn get(&self, round: usize, node: NodeId) -> Option<&RoundWeights> {
        self.rounds.get(round).and_then(|r| r.get(node))
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }
}

/// Replays a [`WeightSchedule`].
pub struct ScheduledWeights {
    schedule: WeightSchedule,
}

impl ScheduledWeights {
    pub fn new(schedule: WeightSchedule) -> Self {
        Self { schedule }
    }
}

impl WeightPolicy for ScheduledWeights {
    fn round_weights(
        &mut self,
        node: NodeId,
        round: usize,
        _out_neighbors: &[NodeId],
    ) -> Result<RoundWeights, WeightError> {
        self.schedule
            .get(round, node)
            .cloned()
            .ok_or(WeightError::Unscheduled { node, round })
    }
}
