//! Deterministic round-based harness.
//!
//! Wires graph, weight policy, node state machines and (optionally) the
//! Paillier transport together, records everything that happened, and
//! derives the error series and the transition-matrix products used by the
//! invariant checks.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryView, AttackError, EavesdropperLog, LinkPayload, LinkRecord};
use crate::consensus::{apply_round, outgoing_shares, ConsensusError, NodeState, Retained, ShareMessage, Trajectory};
use crate::graph::{DirectedGraph, NodeId};
use crate::paillier::{Ciphertext, FixedPointCodec, Keypair, PaillierError, DEFAULT_FRACTIONAL_BITS};
use crate::par::{self, Execution};
use crate::rng::{experiment_rng, node_rng, ProtocolRng, Stream};
use crate::weights::{FixedWeights, RandomWeights, ScheduledWeights, WeightError, WeightParams, WeightPolicy, WeightSchedule};

/// Consecutive quiet rounds required before the harness stops early.
pub const QUIET_ROUNDS: usize = 10;
pub const DEFAULT_STOP_TOL: f64 = 1e-12;
pub const DEFAULT_KEY_BITS: u64 = 256;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
    #[error("expected {expected} initial values, got {got}")]
    InitialValueCount { expected: usize, got: usize },
    #[error("epsilon {epsilon} violates the bound epsilon < 1/(max out-degree + 1) = {bound}")]
    EpsilonBound { epsilon: f64, bound: f64 },
    #[error("max_rounds {max_rounds} must be at least K + 2 = {min}")]
    TooFewRounds { max_rounds: usize, min: usize },
    #[error("adversary configuration invalid: {0}")]
    Adversary(String),
    #[error("transition product needs rounds {from}..={to} but only {available} are recorded")]
    RangeUncovered { from: usize, to: usize, available: usize },
    #[error(transparent)]
    Weights(#[from] WeightError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Attack(#[from] AttackError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Conventional push-sum with fixed weights.
    #[serde(rename = "algorithm0")]
    Algorithm0,
    /// Two-phase random weights, plaintext shares.
    #[serde(rename = "algorithm1")]
    Algorithm1,
    /// Two-phase random weights, Paillier-encrypted shares.
    #[serde(rename = "algorithm2-simulated")]
    Algorithm2,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Algorithm0 => "algorithm0",
            Mode::Algorithm1 => "algorithm1",
            Mode::Algorithm2 => "algorithm2-simulated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Ratio attack on conventional push-sum.
    Baseline,
    /// Single adversary that is the target's only neighbor.
    SoleNeighbor,
    /// Colluding set covering the target's whole neighborhood.
    Colluding,
    /// Minimum-norm least-squares estimate.
    LeastSquares,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySpec {
    pub members: Vec<NodeId>,
    pub target: Option<NodeId>,
    pub attack: Option<AttackKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub graph: DirectedGraph,
    pub x0: Vec<f64>,
    pub params: WeightParams,
    /// Number of rounds `M`; states `0..=M` are recorded.
    pub max_rounds: usize,
    /// Early stop once `max_i |pi_i(k) - pi_i(k-1)| < stop_tol` for
    /// [`QUIET_ROUNDS`] rounds in a row. Non-positive disables it.
    pub stop_tol: f64,
    pub seed: u64,
    pub mode: Mode,
    pub adversary: Option<AdversarySpec>,
    pub key_bits: u64,
    pub fractional_bits: u32,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(graph: DirectedGraph, x0: Vec<f64>, params: WeightParams) -> Self {
        Self {
            graph,
            x0,
            params,
            max_rounds: 100,
            stop_tol: DEFAULT_STOP_TOL,
            seed: 0,
            mode: Mode::Algorithm1,
            adversary: None,
            key_bits: DEFAULT_KEY_BITS,
            fractional_bits: DEFAULT_FRACTIONAL_BITS,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let g = &self.graph;
        if !g.is_strongly_connected() {
            return Err(SimError::NotStronglyConnected);
        }
        if self.x0.len() != g.node_count() {
            return Err(SimError::InitialValueCount { expected: g.node_count(), got: self.x0.len() });
        }
        match self.params.validate_for(g) {
            Err(WeightError::InvalidEpsilon { .. }) => {
                return Err(SimError::EpsilonBound {
                    epsilon: self.params.epsilon,
                    bound: WeightParams::epsilon_bound(g),
                })
            }
            other => other?,
        }
        let min = self.params.big_k + 2;
        if self.max_rounds < min {
            return Err(SimError::TooFewRounds { max_rounds: self.max_rounds, min });
        }
        if let Some(adv) = &self.adversary {
            if let Some(&m) = adv.members.iter().find(|&&m| m >= g.node_count()) {
                return Err(SimError::Adversary(format!("member {m} out of range")));
            }
            if let Some(t) = adv.target {
                if t >= g.node_count() || adv.members.contains(&t) {
                    return Err(SimError::Adversary(format!("target {t} must be an honest node")));
                }
            }
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        self.x0.iter().sum::<f64>() / self.x0.len() as f64
    }
}

/// Everything that happened in one execution. Ground truth: attacks never see
/// this directly, only an [`AdversaryView`] extracted from it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionTrace {
    pub graph: DirectedGraph,
    pub params: WeightParams,
    pub x0: Vec<f64>,
    pub trajectory: Trajectory,
    pub schedule: WeightSchedule,
    /// Shares as computed by their senders, per round.
    pub sent: Vec<Vec<ShareMessage>>,
    /// Shares as obtained by their receivers (after decryption), per round.
    pub delivered: Vec<Vec<ShareMessage>>,
    pub retained: Vec<Vec<Retained>>,
}

impl ExecutionTrace {
    pub fn rounds_executed(&self) -> usize {
        self.schedule.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub alpha: f64,
    pub errors: Vec<f64>,
    pub pis: Vec<Vec<f64>>,
}

impl MetricsSeries {
    pub fn final_error(&self) -> f64 {
        self.errors.last().copied().unwrap_or(f64::NAN)
    }

    /// CSV with columns `round,e,pi_0..pi_{N-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let n = self.pis.first().map_or(0, Vec::len);
        let mut header = vec!["round".to_string(), "e".to_string()];
        header.extend((0..n).map(|i| format!("pi_{i}")));
        wtr.write_record(&header)?;
        for (k, (e, pi)) in self.errors.iter().zip(&self.pis).enumerate() {
            let mut row = vec![k.to_string(), e.to_string()];
            row.extend(pi.iter().map(f64::to_string));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// `e(k) = ||pi(k) - alpha 1||_2` for every recorded round.
pub fn error_series(trajectory: &Trajectory, x0: &[f64]) -> MetricsSeries {
    let alpha = x0.iter().sum::<f64>() / x0.len() as f64;
    let pis: Vec<Vec<f64>> = (0..trajectory.len()).map(|k| trajectory.pi_at(k)).collect();
    let errors = pis
        .iter()
        .map(|pi| pi.iter().map(|p| (p - alpha).powi(2)).sum::<f64>().sqrt())
        .collect();
    MetricsSeries { alpha, errors, pis }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    S,
    W,
}

/// Dense `P_s(k)` or `P_w(k)`: entry `(i, j)` is the weight node `j` applies
/// to the share it sends to node `i`.
pub fn round_matrix(schedule: &WeightSchedule, round: usize, which: Which) -> Result<DMatrix<f64>, SimError> {
    let columns = schedule.rounds.get(round).ok_or(SimError::RangeUncovered {
        from: round,
        to: round,
        available: schedule.len(),
    })?;
    let n = columns.len();
    let mut p = DMatrix::zeros(n, n);
    for rw in columns {
        let map = match which {
            Which::S => &rw.s_weights,
            Which::W => &rw.w_weights,
        };
        for (&i, &v) in map {
            p[(i, rw.node_id)] = v;
        }
    }
    Ok(p)
}

/// `Phi(k:t) = P(k) P(k-1) ... P(t)`.
pub fn transition_product(
    schedule: &WeightSchedule,
    from_round: usize,
    to_round: usize,
    which: Which,
) -> Result<DMatrix<f64>, SimError> {
    if from_round > to_round || to_round >= schedule.len() {
        return Err(SimError::RangeUncovered { from: from_round, to: to_round, available: schedule.len() });
    }
    let mut phi = round_matrix(schedule, from_round, which)?;
    for k in from_round + 1..=to_round {
        phi = round_matrix(schedule, k, which)? * phi;
    }
    Ok(phi)
}

/// Share transport between nodes.
enum Transport {
    Plain,
    Encrypted(Box<EncryptedTransport>),
}

struct EncryptedTransport {
    keys: Vec<Keypair>,
    codecs: Vec<FixedPointCodec>,
    rngs: Vec<ProtocolRng>,
}

impl EncryptedTransport {
    fn new(n: usize, seed: u64, key_bits: u64, fractional_bits: u32, exec: Execution) -> Result<Self, SimError> {
        let keys = par::map_range(exec, n, |i| node_keypair(seed, i, key_bits))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let codecs = keys.iter().map(|k| FixedPointCodec::new(k.public.n(), fractional_bits)).collect();
        let rngs = (0..n).map(|i| node_rng(seed, i, Stream::Encryption)).collect();
        Ok(Self { keys, codecs, rngs })
    }
}

/// Key pair node `node` derives from the run seed.
pub fn node_keypair(seed: u64, node: NodeId, key_bits: u64) -> Result<Keypair, PaillierError> {
    Keypair::generate(key_bits, &mut node_rng(seed, node, Stream::Keygen))
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: ExecutionTrace,
    pub metrics: MetricsSeries,
    pub view: Option<AdversaryView>,
    pub eavesdropper: EavesdropperLog,
    /// Wall time of each individual share encryption (encrypted mode only).
    pub encryption_latencies: Vec<Duration>,
}

impl RunOutput {
    pub fn mean_encryption_latency(&self) -> Option<Duration> {
        let n = self.encryption_latencies.len();
        (n > 0).then(|| self.encryption_latencies.iter().sum::<Duration>() / n as u32)
    }
}

/// Runs one experiment end to end with the weight policy implied by its mode.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, SimError> {
    config.validate()?;
    let n = config.graph.node_count();
    match config.mode {
        Mode::Algorithm0 => run_with_policy(config, &mut FixedWeights::uniform(&config.graph)),
        Mode::Algorithm1 | Mode::Algorithm2 => {
            run_with_policy(config, &mut RandomWeights::new(config.params, n, config.seed))
        }
    }
}

/// Replays an execution with explicit initial values and weights, in plaintext.
pub fn replay(
    graph: &DirectedGraph,
    params: WeightParams,
    x0: &[f64],
    schedule: &WeightSchedule,
) -> Result<ExecutionTrace, SimError> {
    let mut config = ExperimentConfig::new(graph.clone(), x0.to_vec(), params);
    config.max_rounds = schedule.len();
    config.stop_tol = 0.0;
    Ok(run_with_policy(&config, &mut ScheduledWeights::new(schedule.clone()))?.trace)
}

/// Runs `config` with a caller-supplied weight policy (used for replays and
/// for negative controls in the invariant suites).
pub fn run_with_policy(config: &ExperimentConfig, policy: &mut dyn WeightPolicy) -> Result<RunOutput, SimError> {
    let graph = &config.graph;
    let n = graph.node_count();
    if config.x0.len() != n {
        return Err(SimError::InitialValueCount { expected: n, got: config.x0.len() });
    }
    let exec = config.execution;
    let mut transport = match config.mode {
        Mode::Algorithm2 => Transport::Encrypted(Box::new(EncryptedTransport::new(
            n,
            config.seed,
            config.key_bits,
            config.fractional_bits,
            exec,
        )?)),
        _ => Transport::Plain,
    };

    let mut states: Vec<NodeState> = config.x0.iter().enumerate().map(|(i, &x)| NodeState::new(i, x)).collect();
    let mut trace = ExecutionTrace {
        graph: graph.clone(),
        params: config.params,
        x0: config.x0.clone(),
        trajectory: Trajectory { rounds: vec![states.clone()] },
        schedule: WeightSchedule::default(),
        sent: Vec::new(),
        delivered: Vec::new(),
        retained: Vec::new(),
    };
    let mut eavesdropper = EavesdropperLog::new(graph.clone(), config.params);
    let mut latencies = Vec::new();
    let mut quiet = 0;

    for k in 0..config.max_rounds {
        let weights = (0..n)
            .map(|i| policy.round_weights(i, k, graph.out_neighbors(i)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sent = Vec::new();
        let mut retained = Vec::with_capacity(n);
        for (state, rw) in states.iter().zip(&weights) {
            let (msgs, keep) = outgoing_shares(state, rw)?;
            sent.extend(msgs);
            retained.push(keep);
        }

        let delivered = match &mut transport {
            Transport::Plain => {
                for m in &sent {
                    eavesdropper.records.push(LinkRecord {
                        sender: m.sender,
                        receiver: m.receiver,
                        round: k,
                        payload: LinkPayload::Plain { s: m.s_share, w: m.w_share },
                    });
                }
                sent.clone()
            }
            Transport::Encrypted(enc) => {
                let (delivered, records, lat) = encrypted_exchange(enc, &sent, n, exec)?;
                eavesdropper.records.extend(records);
                latencies.extend(lat);
                delivered
            }
        };

        let mut inbox: Vec<Vec<ShareMessage>> = vec![Vec::new(); n];
        for m in &delivered {
            inbox[m.receiver].push(*m);
        }
        let next = states
            .iter()
            .zip(&retained)
            .map(|(st, keep)| apply_round(st, graph.in_neighbors(st.node_id), &inbox[st.node_id], *keep))
            .collect::<Result<Vec<_>, _>>()?;

        let change = next.iter().zip(&states).map(|(a, b)| (a.pi - b.pi).abs()).fold(0.0, f64::max);
        states = next;
        trace.trajectory.rounds.push(states.clone());
        trace.schedule.rounds.push(weights);
        trace.sent.push(sent);
        trace.delivered.push(delivered);
        trace.retained.push(retained);

        if config.stop_tol > 0.0 && k > config.params.big_k {
            quiet = if change < config.stop_tol { quiet + 1 } else { 0 };
            if quiet >= QUIET_ROUNDS {
                break;
            }
        }
    }

    let metrics = error_series(&trace.trajectory, &config.x0);
    let view = config.adversary.as_ref().map(|adv| AdversaryView::collect(&trace, &adv.members));
    Ok(RunOutput { trace, metrics, view, eavesdropper, encryption_latencies: latencies })
}

type Exchange = (Vec<ShareMessage>, Vec<LinkRecord>, Vec<Duration>);

/// Every sender encrypts each share under its receiver's key; every receiver
/// decrypts with its own private key.
fn encrypted_exchange(
    enc: &mut EncryptedTransport,
    sent: &[ShareMessage],
    n: usize,
    exec: Execution,
) -> Result<Exchange, SimError> {
    let mut outboxes: Vec<Vec<ShareMessage>> = vec![Vec::new(); n];
    for m in sent {
        outboxes[m.sender].push(*m);
    }
    let keys = &enc.keys;
    let codecs = &enc.codecs;
    type Sealed = Result<Vec<(ShareMessage, Ciphertext, Ciphertext, Duration)>, SimError>;
    let sealed: Vec<Sealed> = par::map_mut(exec, &mut enc.rngs, |sender, rng| {
        outboxes[sender]
            .iter()
            .map(|m| {
                let key = &keys[m.receiver].public;
                let codec = &codecs[m.receiver];
                let start = Instant::now();
                let cs = key.encrypt(&codec.encode(m.s_share)?, rng)?;
                let cw = key.encrypt(&codec.encode(m.w_share)?, rng)?;
                Ok((*m, cs, cw, start.elapsed() / 2))
            })
            .collect()
    });

    let mut records = Vec::with_capacity(sent.len());
    let mut inboxes: Vec<Vec<(ShareMessage, Ciphertext, Ciphertext)>> = vec![Vec::new(); n];
    let mut latencies = Vec::with_capacity(2 * sent.len());
    for batch in sealed {
        for (m, cs, cw, lat) in batch? {
            latencies.extend([lat, lat]);
            records.push(LinkRecord {
                sender: m.sender,
                receiver: m.receiver,
                round: m.round,
                payload: LinkPayload::Encrypted { s: cs.clone(), w: cw.clone() },
            });
            inboxes[m.receiver].push((m, cs, cw));
        }
    }

    let opened: Vec<Result<Vec<ShareMessage>, SimError>> = par::map_range(exec, n, |receiver| {
        let key = &keys[receiver];
        let codec = &codecs[receiver];
        inboxes[receiver]
            .iter()
            .map(|(m, cs, cw)| {
                Ok(ShareMessage {
                    s_share: codec.decode(&key.decrypt(cs)?),
                    w_share: codec.decode(&key.decrypt(cw)?),
                    ..*m
                })
            })
            .collect()
    });
    let mut delivered = Vec::with_capacity(sent.len());
    for batch in opened {
        delivered.extend(batch?);
    }
    delivered.sort_by_key(|m| (m.sender, m.receiver));
    Ok((delivered, records, latencies))
}

/// Five-node strongly connected graph used by the presets and tests.
///
/// Links: 0->1, 0->4, 1->2, 2->1, 2->3, 3->0, 3->4, 4->3. Node 0 sends to
/// {1, 4} and hears only from 3, so the colluding set {1, 2, 3} misses the
/// neighbor 4.
pub fn reference_graph() -> DirectedGraph {
    DirectedGraph::from_links(5, [(0, 1), (0, 4), (1, 2), (2, 1), (2, 3), (3, 0), (3, 4), (4, 3)])
        .expect("valid graph")
}

/// One row of a least-squares attack experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackTrial {
    pub trial: usize,
    pub seed: u64,
    pub true_x0: f64,
    pub estimate: f64,
}

/// Repeats the least-squares attack over independently seeded runs. Every
/// trial redraws the non-target initial values uniformly from
/// `other_range` and all coupling weights; the target keeps `true_x0`.
/// Each run executes `m + 1` rounds so equations up to round `m` exist.
pub fn least_squares_trials(
    base: &ExperimentConfig,
    members: &[NodeId],
    target: NodeId,
    true_x0: f64,
    m: usize,
    trials: usize,
    other_range: (f64, f64),
    exec: Execution,
) -> Result<Vec<AttackTrial>, SimError> {
    let mut seeder = experiment_rng(base.seed ^ true_x0.to_bits());
    let seeds: Vec<u64> = (0..trials).map(|_| seeder.gen()).collect();
    let results = par::map_range(exec, trials, |trial| -> Result<AttackTrial, SimError> {
        let seed = seeds[trial];
        let mut rng = experiment_rng(seed);
        let mut cfg = base.clone();
        cfg.x0 = (0..cfg.graph.node_count())
            .map(|i| if i == target { true_x0 } else { rng.gen_range(other_range.0..other_range.1) })
            .collect();
        cfg.seed = seed;
        cfg.mode = Mode::Algorithm1;
        cfg.max_rounds = m + 1;
        cfg.stop_tol = 0.0;
        cfg.execution = Execution::Sequential;
        cfg.adversary = Some(AdversarySpec { members: members.to_vec(), target: Some(target), attack: None });
        let out = run_experiment(&cfg)?;
        let view = out.view.expect("adversary configured");
        let estimate = crate::adversary::attack_least_squares(&view, target, m)?;
        Ok(AttackTrial { trial, seed, true_x0, estimate })
    });
    results.into_iter().collect()
}

/// CSV with columns `trial,seed,true_x0,estimate`.
pub fn write_trials_csv<W: Write>(trials: &[AttackTrial], out: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for t in trials {
        wtr.serialize(t)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Draws `n` initial values uniformly from `range` with the experiment stream.
pub fn random_initial_values(seed: u64, n: usize, range: (f64, f64)) -> Vec<f64> {
    let mut rng = experiment_rng(seed);
    (0..n).map(|_| rng.gen_range(range.0..range.1)).collect()
}
