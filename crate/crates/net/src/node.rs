//! One consensus participant talking TCP to its neighbors.
//!
//! Startup: connect to every neighbor (lower id dials, higher id accepts),
//! exchange a hello frame, then flood public keys until every node's key is
//! known. Rounds: split the state, send one share per out-neighbor (sealed
//! under the receiver's key in encrypted mode), wait for one share from
//! every in-neighbor, fold. Reader threads feed a single channel, so the
//! protocol logic itself is single-threaded.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use ppac_core::consensus::{apply_round, outgoing_shares, ConsensusError, NodeState, ShareMessage};
use ppac_core::graph::{DirectedGraph, NodeId};
use ppac_core::paillier::{FixedPointCodec, Keypair, PaillierError, PublicKey, DEFAULT_FRACTIONAL_BITS};
use ppac_core::rng::{node_rng, ProtocolRng, Stream};
use ppac_core::sim::node_keypair;
use ppac_core::weights::{RandomWeights, WeightError, WeightParams, WeightPolicy};
use thiserror::Error;

use crate::frame::{self, FrameError, MsgType, WireFrame};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("peer {peer} disconnected before sending its round-{round} share")]
    PeerDisconnected { peer: NodeId, round: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Weights(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Plain,
    Encrypted,
}

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: NodeId,
    pub graph: DirectedGraph,
    /// Listening address of every node, indexed by id.
    pub addresses: Vec<SocketAddr>,
    pub x0: f64,
    pub params: WeightParams,
    pub rounds: usize,
    pub seed: u64,
    pub transport: Transport,
    pub key_bits: u64,
    pub fractional_bits: u32,
    pub connect_timeout: Duration,
    pub round_timeout: Duration,
    /// Keep a copy of every encoded frame this node sends.
    pub capture_frames: bool,
}

impl NodeConfig {
    pub fn new(id: NodeId, graph: DirectedGraph, addresses: Vec<SocketAddr>, x0: f64, params: WeightParams) -> Self {
        Self {
            id,
            graph,
            addresses,
            x0,
            params,
            rounds: 100,
            seed: 0,
            transport: Transport::Encrypted,
            key_bits: 256,
            fractional_bits: DEFAULT_FRACTIONAL_BITS,
            connect_timeout: Duration::from_secs(20),
            round_timeout: Duration::from_secs(30),
            capture_frames: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NodeReport {
    pub id: NodeId,
    /// States `0..=rounds`.
    pub states: Vec<NodeState>,
    pub encryption_latencies: Vec<Duration>,
    pub sent_frames: Vec<Vec<u8>>,
    pub keys_known: usize,
}

impl NodeReport {
    pub fn mean_encryption_latency(&self) -> Option<Duration> {
        let n = self.encryption_latencies.len();
        (n > 0).then(|| self.encryption_latencies.iter().sum::<Duration>() / n as u32)
    }
}

enum Event {
    Frame(NodeId, WireFrame),
    Closed(NodeId),
}

struct Peers {
    streams: BTreeMap<NodeId, TcpStream>,
    captured: Option<Vec<Vec<u8>>>,
}

impl Peers {
    fn send(&mut self, to: NodeId, f: &WireFrame) -> io::Result<()> {
        let bytes = f.encode();
        let stream = self.streams.get_mut(&to).expect("connected neighbor");
        io::Write::write_all(stream, &bytes)?;
        if let Some(cap) = &mut self.captured {
            cap.push(bytes);
        }
        Ok(())
    }
}

/// Runs a node to completion on an already bound listener.
pub fn run_node(config: &NodeConfig, listener: TcpListener) -> Result<NodeReport, NetError> {
    let me = config.id;
    let g = &config.graph;
    let n = g.node_count();
    if config.addresses.len() != n {
        return Err(NetError::Protocol(format!("{} addresses for {n} nodes", config.addresses.len())));
    }
    let keypair = node_keypair(config.seed, me, config.key_bits)?;
    let codec = FixedPointCodec::new(keypair.public.n(), config.fractional_bits);

    let (tx, rx) = mpsc::channel();
    let mut peers = connect(config, listener, &tx)?;
    if config.capture_frames {
        peers.captured = Some(Vec::new());
    }
    drop(tx);

    let mut node = Runtime {
        config,
        keypair,
        codec,
        keys: BTreeMap::new(),
        inbox: HashMap::new(),
        closed: HashSet::new(),
        rx,
        peers,
    };
    node.exchange_keys()?;

    let mut weights = RandomWeights::new(config.params, n, config.seed);
    let mut enc_rng = node_rng(config.seed, me, Stream::Encryption);
    let mut state = NodeState::new(me, config.x0);
    let mut states = vec![state];
    let mut latencies = Vec::new();
    for k in 0..config.rounds {
        let rw = weights.round_weights(me, k, g.out_neighbors(me))?;
        let (shares, retained) = outgoing_shares(&state, &rw)?;
        for m in &shares {
            let frame = node.seal(m, &mut enc_rng, &mut latencies)?;
            node.peers.send(m.receiver, &frame)?;
        }
        let received = node.collect_round(k)?;
        state = apply_round(&state, g.in_neighbors(me), &received, retained)?;
        states.push(state);
    }

    Ok(NodeReport {
        id: me,
        states,
        encryption_latencies: latencies,
        sent_frames: node.peers.captured.take().unwrap_or_default(),
        keys_known: node.keys.len(),
    })
}

fn neighbors(g: &DirectedGraph, me: NodeId) -> Vec<NodeId> {
    g.neighborhood(me).into_iter().collect()
}

fn connect(config: &NodeConfig, listener: TcpListener, tx: &Sender<Event>) -> Result<Peers, NetError> {
    let me = config.id;
    let deadline = Instant::now() + config.connect_timeout;
    let mut pending: HashSet<NodeId> = neighbors(&config.graph, me).into_iter().collect();
    let mut streams = BTreeMap::new();
    listener.set_nonblocking(true)?;
    let hello = WireFrame::new(MsgType::RoundSync, me as u32, 0, Vec::new());

    while !pending.is_empty() {
        if Instant::now() > deadline {
            return Err(NetError::Timeout(format!("node {me} still waiting for neighbors {pending:?}")));
        }
        let mut progressed = false;
        let dial: Vec<NodeId> = pending.iter().copied().filter(|&j| j > me).collect();
        for j in dial {
            if let Ok(mut s) = TcpStream::connect_timeout(&config.addresses[j], Duration::from_millis(200)) {
                s.set_nodelay(true)?;
                hello.write_to(&mut s)?;
                pending.remove(&j);
                streams.insert(j, s);
                progressed = true;
            }
        }
        match listener.accept() {
            Ok((mut s, _)) => {
                s.set_nonblocking(false)?;
                s.set_nodelay(true)?;
                s.set_read_timeout(Some(config.connect_timeout))?;
                let first = WireFrame::read_from(&mut s)?;
                let from = first.sender_id as NodeId;
                if first.msg_type != MsgType::RoundSync || !pending.remove(&from) || from > me {
                    return Err(NetError::Protocol(format!("unexpected hello from {from}")));
                }
                streams.insert(from, s);
                progressed = true;
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {}
            Err(e) => return Err(e.into()),
        }
        if !progressed {
            thread::sleep(Duration::from_millis(10));
        }
    }

    for (&peer, s) in &streams {
        let mut reader = s.try_clone()?;
        reader.set_read_timeout(None)?;
        let tx = tx.clone();
        thread::spawn(move || loop {
            match WireFrame::read_from(&mut reader) {
                Ok(f) => {
                    if tx.send(Event::Frame(peer, f)).is_err() {
                        return;
                    }
                }
                Err(_) => {
                    let _ = tx.send(Event::Closed(peer));
                    return;
                }
            }
        });
    }
    Ok(Peers { streams, captured: None })
}

struct Runtime<'a> {
    config: &'a NodeConfig,
    keypair: Keypair,
    codec: FixedPointCodec,
    keys: BTreeMap<NodeId, PublicKey>,
    inbox: HashMap<usize, Vec<ShareMessage>>,
    closed: HashSet<NodeId>,
    rx: Receiver<Event>,
    peers: Peers,
}

impl Runtime<'_> {
    fn me(&self) -> NodeId {
        self.config.id
    }

    fn exchange_keys(&mut self) -> Result<(), NetError> {
        let me = self.me();
        self.keys.insert(me, self.keypair.public.clone());
        let announce = WireFrame::new(MsgType::KeyAnnounce, me as u32, 0, frame::key_payload(&self.keypair.public));
        for peer in neighbors(&self.config.graph, me) {
            self.peers.send(peer, &announce)?;
        }
        let deadline = Instant::now() + self.config.connect_timeout;
        while self.keys.len() < self.config.graph.node_count() {
            let wait = deadline.saturating_duration_since(Instant::now());
            self.next_event(wait).map_err(|_| {
                let absent: Vec<NodeId> =
                    (0..self.config.graph.node_count()).filter(|n| !self.keys.contains_key(n)).collect();
                NetError::Timeout(format!("node {me} has no public key for nodes {absent:?}"))
            })?;
        }
        Ok(())
    }

    fn seal(
        &self,
        m: &ShareMessage,
        rng: &mut ProtocolRng,
        latencies: &mut Vec<Duration>,
    ) -> Result<WireFrame, NetError> {
        let (ty, payload) = match self.config.transport {
            Transport::Plain => (MsgType::SharePlain, frame::plain_share_payload(m.s_share, m.w_share)),
            Transport::Encrypted => {
                let key = &self.keys[&m.receiver];
                let codec = FixedPointCodec::new(key.n(), self.config.fractional_bits);
                let start = Instant::now();
                let cs = key.encrypt(&codec.encode(m.s_share)?, rng)?;
                let mid = Instant::now();
                let cw = key.encrypt(&codec.encode(m.w_share)?, rng)?;
                latencies.extend([mid - start, mid.elapsed()]);
                (MsgType::ShareEnc, frame::enc_share_payload(&cs, &cw))
            }
        };
        Ok(WireFrame::new(ty, m.sender as u32, m.round as u32, payload))
    }

    fn collect_round(&mut self, round: usize) -> Result<Vec<ShareMessage>, NetError> {
        let me = self.me();
        let ins = self.config.graph.in_neighbors(me).to_vec();
        let deadline = Instant::now() + self.config.round_timeout;
        loop {
            let have = self.inbox.get(&round).map_or(0, Vec::len);
            if have >= ins.len() {
                return Ok(self.inbox.remove(&round).unwrap_or_default());
            }
            let got: HashSet<NodeId> = self.inbox.get(&round).into_iter().flatten().map(|m| m.sender).collect();
            if let Some(&peer) = ins.iter().find(|j| !got.contains(j) && self.closed.contains(j)) {
                return Err(NetError::PeerDisconnected { peer, round });
            }
            let wait = deadline.saturating_duration_since(Instant::now());
            self.next_event(wait)
                .map_err(|_| NetError::Timeout(format!("node {me} waiting for round-{round} shares")))?;
        }
    }

    /// Handles one event; `Err(())` on timeout or when every reader is gone.
    fn next_event(&mut self, wait: Duration) -> Result<(), NetError> {
        let event = match self.rx.recv_timeout(wait) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => return Err(NetError::Timeout(String::new())),
            Err(RecvTimeoutError::Disconnected) => return Err(NetError::Timeout("all peers gone".into())),
        };
        match event {
            Event::Closed(peer) => {
                self.closed.insert(peer);
                Ok(())
            }
            Event::Frame(from, f) => self.handle(from, f),
        }
    }

    fn handle(&mut self, from: NodeId, f: WireFrame) -> Result<(), NetError> {
        let me = self.me();
        let sender = f.sender_id as NodeId;
        match f.msg_type {
            MsgType::KeyAnnounce => {
                let key = frame::parse_key(&f.payload)?;
                if sender < self.config.graph.node_count() && !self.keys.contains_key(&sender) {
                    self.keys.insert(sender, key);
                    for peer in neighbors(&self.config.graph, me) {
                        if peer != from {
                            // a neighbor that already finished may have hung up
                            let _ = self.peers.send(peer, &f);
                        }
                    }
                }
            }
            MsgType::SharePlain | MsgType::ShareEnc => {
                if sender != from || !self.config.graph.has_link(sender, me) {
                    return Err(NetError::Protocol(format!("share from {sender} arrived via {from}")));
                }
                let (s_share, w_share) = if f.msg_type == MsgType::SharePlain {
                    frame::parse_plain_share(&f.payload)?
                } else {
                    let (cs, cw) = frame::parse_enc_share(&f.payload, self.keypair.public.id())?;
                    (self.codec.decode(&self.keypair.decrypt(&cs)?), self.codec.decode(&self.keypair.decrypt(&cw)?))
                };
                let round = f.round as usize;
                self.inbox.entry(round).or_default().push(ShareMessage {
                    sender,
                    receiver: me,
                    round,
                    s_share,
                    w_share,
                });
            }
            MsgType::RoundSync => {}
        }
        Ok(())
    }
}
