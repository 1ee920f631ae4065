//! Honest-but-curious and eavesdropping adversaries.
//!
//! Attacks consume only an [`AdversaryView`] (or an [`EavesdropperLog`]),
//! which is extracted from a full execution trace by keeping exactly what
//! the colluding members could observe: their own states and weights, the
//! shares they sent and the shares they received. The witness builder is
//! the one exception. It is a constructive argument rather than an attack,
//! so it works from the ground-truth trace and produces an alternative
//! execution that the members cannot tell apart from the real one.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::consensus::ShareMessage;
use crate::graph::{DirectedGraph, NodeId};
use crate::lstsq;
use crate::paillier::Ciphertext;
use crate::sim::{self, ExecutionTrace, SimError};
use crate::weights::{RoundWeights, WeightParams, WeightSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("trace has {available} rounds but the attack needs {needed}")]
    TraceIncomplete { needed: usize, available: usize },
    #[error("topology condition unmet: {0}")]
    TopologyConditionUnmet(String),
    #[error("witness construction divides by zero (alternative value {alt_x0})")]
    DegenerateDenominator { alt_x0: f64 },
    #[error("link {from}->{to} carries only ciphertexts")]
    Encrypted { from: NodeId, to: NodeId },
}

/// Everything a set of colluding members can observe during one execution.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryView {
    pub members: BTreeSet<NodeId>,
    pub topology: DirectedGraph,
    pub params: WeightParams,
    /// Number of executed rounds; states are known for `0..=rounds`.
    pub rounds: usize,
    /// `(s, w)` of each member per round.
    pub state_log: BTreeMap<NodeId, Vec<(f64, f64)>>,
    /// Weights each member chose, per round.
    pub member_weights: BTreeMap<NodeId, Vec<RoundWeights>>,
    /// Shares sent by members, ordered by `(round, sender, receiver)`.
    pub sent_log: Vec<ShareMessage>,
    /// Shares received by members, ordered by `(round, sender, receiver)`.
    pub recv_log: Vec<ShareMessage>,
}

impl AdversaryView {
    /// Restricts a full trace to what `members` observe.
    pub fn collect(trace: &ExecutionTrace, members: &[NodeId]) -> Self {
        let members: BTreeSet<NodeId> = members.iter().copied().collect();
        let state_log = members
            .iter()
            .map(|&m| (m, trace.trajectory.rounds.iter().map(|r| (r[m].s, r[m].w)).collect()))
            .collect();
        let member_weights = members
            .iter()
            .map(|&m| (m, trace.schedule.rounds.iter().map(|r| r[m].clone()).collect()))
            .collect();
        let pick = |log: &[Vec<ShareMessage>], keep: &dyn Fn(&ShareMessage) -> bool| {
            let mut out: Vec<ShareMessage> = log.iter().flatten().filter(|m| keep(m)).copied().collect();
            out.sort_by_key(|m| (m.round, m.sender, m.receiver));
            out
        };
        let sent_log = pick(&trace.sent, &|m| members.contains(&m.sender));
        let recv_log = pick(&trace.delivered, &|m| members.contains(&m.receiver));
        Self {
            topology: trace.graph.clone(),
            params: trace.params,
            rounds: trace.rounds_executed(),
            state_log,
            member_weights,
            sent_log,
            recv_log,
            members,
        }
    }

    /// `w_m(k) = 1` holds for every node at every `k <= K + 1`.
    pub fn w_known_one(&self, round: usize) -> bool {
        round <= self.params.big_k + 1
    }

    /// Shares on links with at least one member endpoint, keyed by
    /// `(sender, receiver, round)`.
    fn observed_links(&self) -> HashMap<(NodeId, NodeId, usize), (f64, f64)> {
        self.sent_log
            .iter()
            .chain(&self.recv_log)
            .map(|m| ((m.sender, m.receiver, m.round), (m.s_share, m.w_share)))
            .collect()
    }
}

/// Largest absolute difference between two views over every logged number.
/// Views with different shapes are infinitely far apart.
pub fn view_discrepancy(a: &AdversaryView, b: &AdversaryView) -> f64 {
    if a.members != b.members || a.rounds != b.rounds || a.topology != b.topology {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for (m, states_a) in &a.state_log {
        let states_b = &b.state_log[m];
        if states_a.len() != states_b.len() {
            return f64::INFINITY;
        }
        for ((sa, wa), (sb, wb)) in states_a.iter().zip(states_b) {
            worst = worst.max((sa - sb).abs()).max((wa - wb).abs());
        }
    }
    for (m, wa) in &a.member_weights {
        for (ra, rb) in wa.iter().zip(&b.member_weights[m]) {
            for (ma, mb) in [(&ra.s_weights, &rb.s_weights), (&ra.w_weights, &rb.w_weights)] {
                if ma.keys().ne(mb.keys()) {
                    return f64::INFINITY;
                }
                for (x, y) in ma.values().zip(mb.values()) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    for (la, lb) in [(&a.sent_log, &b.sent_log), (&a.recv_log, &b.recv_log)] {
        if la.len() != lb.len() {
            return f64::INFINITY;
        }
        for (x, y) in la.iter().zip(lb) {
            if (x.sender, x.receiver, x.round) != (y.sender, y.receiver, y.round) {
                return f64::INFINITY;
            }
            worst = worst.max((x.s_share - y.s_share).abs()).max((x.w_share - y.w_share).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub enum LinkPayload {
    Plain { s: f64, w: f64 },
    Encrypted { s: Ciphertext, w: Ciphertext },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkRecord {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub round: usize,
    pub payload: LinkPayload,
}

/// Wiretap of every link. Holds payloads exactly as transmitted.
#[derive(Debug, Clone, PartialEq)]
pub struct EavesdropperLog {
    pub topology: DirectedGraph,
    pub params: WeightParams,
    pub records: Vec<LinkRecord>,
}

impl EavesdropperLog {
    pub fn new(topology: DirectedGraph, params: WeightParams) -> Self {
        Self { topology, params, records: Vec::new() }
    }

    pub fn rounds(&self) -> usize {
        self.records.iter().map(|r| r.round + 1).max().unwrap_or(0)
    }

    pub fn is_fully_encrypted(&self) -> bool {
        self.records.iter().all(|r| matches!(r.payload, LinkPayload::Encrypted { .. }))
    }
}

/// Reads the initial value of every non-member in-neighbor of a member off
/// the first round of conventional push-sum, where `s/w` of any share equals
/// the sender's initial value.
pub fn attack_pushsum_baseline(view: &AdversaryView) -> Result<BTreeMap<NodeId, f64>, AttackError> {
    if view.rounds == 0 {
        return Err(AttackError::TraceIncomplete { needed: 1, available: 0 });
    }
    Ok(view
        .recv_log
        .iter()
        .filter(|m| m.round == 0 && !view.members.contains(&m.sender))
        .map(|m| (m.sender, m.s_share / m.w_share))
        .collect())
}

/// Recovery when the single member is the target's only in- and
/// out-neighbor.
pub fn attack_sole_neighbor(view: &AdversaryView, target: NodeId) -> Result<f64, AttackError> {
    let g = &view.topology;
    let [j] = view.members.iter().copied().collect::<Vec<_>>()[..] else {
        return Err(AttackError::TopologyConditionUnmet(format!("{} members, need exactly one", view.members.len())));
    };
    if g.out_neighbors(target) != [j] || g.in_neighbors(target) != [j] {
        return Err(AttackError::TopologyConditionUnmet(format!(
            "node {j} is not the only neighbor of node {target}"
        )));
    }
    let links = view.observed_links();
    reconstruct_initial_value(g, view.params, view.rounds, target, |from, to, k| {
        links.get(&(from, to, k)).copied().ok_or(AttackError::TraceIncomplete { needed: k + 1, available: view.rounds })
    })
}

/// Recovery when the members cover the target's whole neighborhood.
pub fn attack_colluding_full_neighborhood(view: &AdversaryView, target: NodeId) -> Result<f64, AttackError> {
    let g = &view.topology;
    if view.members.contains(&target) {
        return Err(AttackError::TopologyConditionUnmet(format!("node {target} is a member")));
    }
    if let Some(missing) = g.neighborhood(target).into_iter().find(|n| !view.members.contains(n)) {
        return Err(AttackError::TopologyConditionUnmet(format!(
            "neighbor {missing} of node {target} is not a member"
        )));
    }
    let links = view.observed_links();
    reconstruct_initial_value(g, view.params, view.rounds, target, |from, to, k| {
        links.get(&(from, to, k)).copied().ok_or(AttackError::TraceIncomplete { needed: k + 1, available: view.rounds })
    })
}

/// Recovery from a plaintext wiretap of every link.
pub fn attack_eavesdropper(log: &EavesdropperLog, target: NodeId) -> Result<f64, AttackError> {
    let links: HashMap<(NodeId, NodeId, usize), &LinkPayload> =
        log.records.iter().map(|r| ((r.sender, r.receiver, r.round), &r.payload)).collect();
    let rounds = log.rounds();
    reconstruct_initial_value(&log.topology, log.params, rounds, target, |from, to, k| {
        match links.get(&(from, to, k)) {
            Some(LinkPayload::Plain { s, w }) => Ok((*s, *w)),
            Some(LinkPayload::Encrypted { .. }) => Err(AttackError::Encrypted { from, to }),
            None => Err(AttackError::TraceIncomplete { needed: k + 1, available: rounds }),
        }
    })
}

/// Shared core of the exact attacks. With every link of `target` readable:
/// `w(k + 1) = w(k) + sum(in w-shares) - sum(out w-shares)` from `w(0) = 1`;
/// at round `K + 1` the s- and w-weights coincide, so any out-share ratio is
/// `s(K + 1) / w(K + 1)`; finally the s-telescope is unwound back to `s(0)`.
fn reconstruct_initial_value<F>(
    g: &DirectedGraph,
    params: WeightParams,
    rounds: usize,
    target: NodeId,
    share: F,
) -> Result<f64, AttackError>
where
    F: Fn(NodeId, NodeId, usize) -> Result<(f64, f64), AttackError>,
{
    let k_star = params.big_k + 1;
    if rounds < k_star + 1 {
        return Err(AttackError::TraceIncomplete { needed: k_star + 1, available: rounds });
    }
    let mut w = 1.0;
    let mut s_delta = 0.0;
    for k in 0..k_star {
        for &j in g.in_neighbors(target) {
            let (s, ws) = share(j, target, k)?;
            s_delta += s;
            w += ws;
        }
        for &j in g.out_neighbors(target) {
            let (s, ws) = share(target, j, k)?;
            s_delta -= s;
            w -= ws;
        }
    }
    let probe = *g
        .out_neighbors(target)
        .first()
        .ok_or_else(|| AttackError::TopologyConditionUnmet(format!("node {target} has no out-neighbor")))?;
    let (s, ws) = share(target, probe, k_star)?;
    Ok(s / ws * w - s_delta)
}

/// Which quantity an unknown of the least-squares system stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Unknown {
    S(usize),
    DeltaS(usize),
    W(usize),
    DeltaW(usize),
}

/// Linear system the members can assemble about the target when they do
/// not see all of its links. `DeltaS(k)`/`DeltaW(k)` lump together the net
/// flow on every unobserved link of the target in round `k`.
#[derive(Debug, Clone)]
pub struct LeastSquaresSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub unknowns: Vec<Unknown>,
    pub big_k: usize,
    pub m: usize,
}

impl LeastSquaresSystem {
    pub fn build(view: &AdversaryView, target: NodeId, m: usize) -> Result<Self, AttackError> {
        let g = &view.topology;
        let big_k = view.params.big_k;
        if view.members.contains(&target) {
            return Err(AttackError::TopologyConditionUnmet(format!("node {target} is a member")));
        }
        if m < big_k + 1 {
            return Err(AttackError::TraceIncomplete { needed: big_k + 2, available: m + 1 });
        }
        if view.rounds < m + 1 {
            return Err(AttackError::TraceIncomplete { needed: m + 1, available: view.rounds });
        }
        let probe = g.out_neighbors(target).iter().copied().find(|j| view.members.contains(j)).ok_or_else(|| {
            AttackError::TopologyConditionUnmet(format!("no member is an out-neighbor of node {target}"))
        })?;
        let links = view.observed_links();
        let observed = |k: usize| -> (f64, f64) {
            let mut flow = (0.0, 0.0);
            for &j in g.in_neighbors(target) {
                if let Some((s, w)) = links.get(&(j, target, k)) {
                    flow.0 += s;
                    flow.1 += w;
                }
            }
            for &j in g.out_neighbors(target) {
                if let Some((s, w)) = links.get(&(target, j, k)) {
                    flow.0 -= s;
                    flow.1 -= w;
                }
            }
            flow
        };

        let mut unknowns: Vec<Unknown> = (0..=m + 1).map(Unknown::S).collect();
        unknowns.extend((0..=m).map(Unknown::DeltaS));
        unknowns.extend((big_k + 2..=m + 1).map(Unknown::W));
        unknowns.extend((big_k + 1..=m).map(Unknown::DeltaW));
        let col: HashMap<Unknown, usize> = unknowns.iter().enumerate().map(|(c, u)| (*u, c)).collect();
        let n_eq = 3 * m + 1 - 2 * big_k;
        let mut a = DMatrix::zeros(n_eq, unknowns.len());
        let mut b = DVector::zeros(n_eq);
        let mut row = 0;

        for k in 0..=m {
            a[(row, col[&Unknown::S(k + 1)])] = 1.0;
            a[(row, col[&Unknown::S(k)])] = -1.0;
            a[(row, col[&Unknown::DeltaS(k)])] = 1.0;
            b[row] = observed(k).0;
            row += 1;
        }
        for k in big_k + 1..=m {
            a[(row, col[&Unknown::W(k + 1)])] = 1.0;
            a[(row, col[&Unknown::DeltaW(k)])] = 1.0;
            b[row] = observed(k).1;
            match col.get(&Unknown::W(k)) {
                Some(&c) => a[(row, c)] = -1.0,
                None => b[row] += 1.0,
            }
            row += 1;
        }
        for k in big_k + 1..=m {
            let (s, w) = links[&(target, probe, k)];
            let pi = s / w;
            a[(row, col[&Unknown::S(k)])] = 1.0;
            match col.get(&Unknown::W(k)) {
                Some(&c) => a[(row, c)] = -pi,
                None => b[row] = pi,
            }
            row += 1;
        }
        debug_assert_eq!(row, n_eq);
        Ok(Self { matrix: a, rhs: b, unknowns, big_k, m })
    }

    pub fn equation_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn unknown_count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Rows scaled to unit norm. Ratio entries grow with the phase-A
    /// amplification, and the system is consistent, so scaling rows changes
    /// neither the solution set nor the minimum-norm solution.
    fn equilibrated(&self) -> (DMatrix<f64>, DVector<f64>) {
        let mut a = self.matrix.clone();
        let mut b = self.rhs.clone();
        for (i, mut row) in a.row_iter_mut().enumerate() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
                b[i] /= norm;
            }
        }
        (a, b)
    }

    pub fn rank(&self) -> usize {
        lstsq::rank(&self.equilibrated().0)
    }

    pub fn solve(&self) -> DVector<f64> {
        let (a, b) = self.equilibrated();
        lstsq::min_norm_solve(&a, &b)
    }

    /// The `s(0)` component of the minimum-norm solution.
    pub fn estimate(&self) -> f64 {
        self.solve()[0]
    }
}

/// Minimum-norm least-squares estimate of the target's initial value from
/// the equations available up to round `m`.
pub fn attack_least_squares(view: &AdversaryView, target: NodeId, m: usize) -> Result<f64, AttackError> {
    Ok(LeastSquaresSystem::build(view, target, m)?.estimate())
}

/// Alternative initial values and weights that yield the same adversary view.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub x0: Vec<f64>,
    pub schedule: WeightSchedule,
}

impl Witness {
    pub fn replay(&self, graph: &DirectedGraph, params: WeightParams) -> Result<ExecutionTrace, SimError> {
        sim::replay(graph, params, &self.x0, &self.schedule)
    }
}

/// Moves `alt_x0 - x_target` of initial mass between the target and an
/// honest neighbor `helper`, and rescales their first-round value weights so
/// every share the members can see is unchanged. From round 1 on both
/// executions coincide.
pub fn build_indistinguishability_witness(
    trace: &ExecutionTrace,
    members: &[NodeId],
    target: NodeId,
    alt_x0: f64,
    helper: NodeId,
) -> Result<Witness, AttackError> {
    let g = &trace.graph;
    if members.contains(&target) || members.contains(&helper) {
        return Err(AttackError::TopologyConditionUnmet("target and helper must be honest".into()));
    }
    let helper_is_out = g.has_link(target, helper);
    if !helper_is_out && !g.has_link(helper, target) {
        return Err(AttackError::TopologyConditionUnmet(format!(
            "node {helper} is not a neighbor of node {target}"
        )));
    }
    if trace.schedule.is_empty() {
        return Err(AttackError::TraceIncomplete { needed: 1, available: 0 });
    }

    let (xi, xl) = (trace.x0[target], trace.x0[helper]);
    let alt_l = xi + xl - alt_x0;
    if alt_x0 == 0.0 || alt_l == 0.0 {
        return Err(AttackError::DegenerateDenominator { alt_x0 });
    }
    let shift = alt_x0 - xi;
    let mut schedule = trace.schedule.clone();
    let round0 = &mut schedule.rounds[0];

    let col_i = &mut round0[target].s_weights;
    let boosted = if helper_is_out { helper } else { target };
    for (&m, p) in col_i.iter_mut() {
        *p = if m == boosted { (*p * xi + shift) / alt_x0 } else { *p * xi / alt_x0 };
    }
    let col_l = &mut round0[helper].s_weights;
    let drained = if helper_is_out { helper } else { target };
    for (&m, p) in col_l.iter_mut() {
        *p = if m == drained { (*p * xl - shift) / alt_l } else { *p * xl / alt_l };
    }

    let mut x0 = trace.x0.clone();
    x0[target] = alt_x0;
    x0[helper] = alt_l;
    Ok(Witness { x0, schedule })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{reference_graph, run_experiment, AdversarySpec, ExperimentConfig, Mode};
    use crate::weights::WeightParams;

    fn config(graph: DirectedGraph, x0: Vec<f64>, members: &[NodeId], mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(graph, x0, WeightParams::new(1, 0.01, 10.0));
        cfg.mode = mode;
        cfg.stop_tol = 0.0;
        cfg.max_rounds = 10;
        cfg.adversary = Some(AdversarySpec { members: members.to_vec(), target: None, attack: None });
        cfg
    }

    #[test]
    fn view_keeps_only_member_observations() {
        let cfg = config(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], &[1, 2, 3], Mode::Algorithm1);
        let view = run_experiment(&cfg).unwrap().view.unwrap();
        assert!(view.sent_log.iter().all(|m| view.members.contains(&m.sender)));
        assert!(view.recv_log.iter().all(|m| view.members.contains(&m.receiver)));
        assert!(!view.sent_log.iter().chain(&view.recv_log).any(|m| m.sender == 0 && m.receiver == 4));
        assert_eq!(view.state_log.keys().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(view.w_known_one(2) && !view.w_known_one(3));
    }

    #[test]
    fn baseline_reads_in_neighbors() {
        let cfg = config(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], &[3], Mode::Algorithm0);
        let view = run_experiment(&cfg).unwrap().view.unwrap();
        let got = attack_pushsum_baseline(&view).unwrap();
        assert_eq!(got.len(), 2);
        assert!((got[&2] - 20.0).abs() < 1e-12);
        assert!((got[&4] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn sole_neighbor_two_nodes() {
        let g = DirectedGraph::from_links(2, [(0, 1), (1, 0)]).unwrap();
        for truth in [40.0, 0.0] {
            let view = run_experiment(&config(g.clone(), vec![truth, 3.0], &[1], Mode::Algorithm1)).unwrap().view.unwrap();
            let got = attack_sole_neighbor(&view, 0).unwrap();
            assert!((got - truth).abs() < 1e-6 * (1.0 + truth.abs()), "{got}");
        }
    }

    #[test]
    fn sole_neighbor_guard() {
        let view = run_experiment(&config(reference_graph(), vec![1.0; 5], &[3], Mode::Algorithm1)).unwrap().view.unwrap();
        assert!(matches!(attack_sole_neighbor(&view, 0), Err(AttackError::TopologyConditionUnmet(_))));
    }

    #[test]
    fn colluding_recovers_negative_value() {
        let cfg = config(reference_graph(), vec![-17.5, 15.0, 20.0, 25.0, 30.0], &[1, 3, 4], Mode::Algorithm1);
        let view = run_experiment(&cfg).unwrap().view.unwrap();
        let got = attack_colluding_full_neighborhood(&view, 0).unwrap();
        assert!((got + 17.5).abs() < 1e-6 * 18.5);
        let partial = AdversaryView { members: [1, 3].into(), ..view };
        assert!(matches!(
            attack_colluding_full_neighborhood(&partial, 0),
            Err(AttackError::TopologyConditionUnmet(_))
        ));
    }

    #[test]
    fn incomplete_trace_refused() {
        let mut cfg = config(reference_graph(), vec![1.0; 5], &[1, 3, 4], Mode::Algorithm1);
        cfg.params.big_k = 3;
        cfg.max_rounds = 5;
        let mut view = run_experiment(&cfg).unwrap().view.unwrap();
        view.rounds = 4;
        assert!(matches!(
            attack_colluding_full_neighborhood(&view, 0),
            Err(AttackError::TraceIncomplete { .. })
        ));
    }

    #[test]
    fn least_squares_dimensions() {
        let mut cfg = config(reference_graph(), vec![40.0, 15.0, 20.0, 25.0, 30.0], &[1, 2, 3], Mode::Algorithm1);
        cfg.max_rounds = 21;
        let view = run_experiment(&cfg).unwrap().view.unwrap();
        let sys = LeastSquaresSystem::build(&view, 0, 20).unwrap();
        assert_eq!(sys.equation_count(), 3 * 20 - 2 + 1);
        assert_eq!(sys.unknown_count(), 4 * 20 - 2 + 3);
        assert!(sys.rank() < sys.unknown_count());
        let x = sys.solve();
        assert!((&sys.matrix * &x - &sys.rhs).norm() < 1e-8 * (1.0 + sys.rhs.norm()));
    }

    #[test]
    fn witness_identity_and_mass() {
        let cfg = config(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], &[1, 2, 3], Mode::Algorithm1);
        let out = run_experiment(&cfg).unwrap();
        let same = build_indistinguishability_witness(&out.trace, &[1, 2, 3], 0, 10.0, 4).unwrap();
        assert_eq!(same.x0, out.trace.x0);
        let w = build_indistinguishability_witness(&out.trace, &[1, 2, 3], 0, 23.0, 4).unwrap();
        assert_eq!(w.x0.iter().sum::<f64>(), out.trace.x0.iter().sum::<f64>());
        let replayed = w.replay(&cfg.graph, cfg.params).unwrap();
        let alt = AdversaryView::collect(&replayed, &[1, 2, 3]);
        assert!(view_discrepancy(out.view.as_ref().unwrap(), &alt) < 1e-9);
        assert!(matches!(
            build_indistinguishability_witness(&out.trace, &[1, 2, 3], 0, 0.0, 4),
            Err(AttackError::DegenerateDenominator { .. })
        ));
        assert!(matches!(
            build_indistinguishability_witness(&out.trace, &[1, 2, 3], 0, 40.0, 4),
            Err(AttackError::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn eavesdropper_plain_vs_encrypted() {
        let mut cfg = config(reference_graph(), vec![10.0, 15.0, 20.0, 25.0, 30.0], &[], Mode::Algorithm1);
        cfg.adversary = None;
        let plain = run_experiment(&cfg).unwrap();
        assert!((attack_eavesdropper(&plain.eavesdropper, 2).unwrap() - 20.0).abs() < 1e-9);
        cfg.mode = Mode::Algorithm2;
        cfg.key_bits = 128;
        cfg.max_rounds = 3;
        let enc = run_experiment(&cfg).unwrap();
        assert!(enc.eavesdropper.is_fully_encrypted());
        assert!(matches!(attack_eavesdropper(&enc.eavesdropper, 2), Err(AttackError::Encrypted { .. })));
    }
}
