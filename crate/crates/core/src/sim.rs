//! Deterministic discrete-event network simulator.
//!
//! One run owns every node's protocol state and a single event queue ordered
//! by `(time, seq)`. All randomness (initial phases, link delays) comes from
//! one seeded ChaCha generator, so equal inputs give bit-identical outputs.
//!
//! Links are reliable: a broadcast reaches every neighbour that is up and
//! attached when the message arrives. A moving node is detached from the
//! graph, neither sends nor receives, and keeps its protocol state until it
//! reattaches at its destination.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::rc::Rc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fd::{FdError, FdState, NodeId, QueryMsg, ResponseMsg, RoundStatus, TaggedEntry};
use crate::heartbeat::{HbError, HbState, HeartbeatMsg};
use crate::metrics::{
    Change, Crash, NeighborhoodRecord, PropertyWitness, Receipt, RoundRecord, SuspicionRecord, Timeline,
};
use crate::topology::{Point, Topology, TopologyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    AsyncFd,
    Heartbeat,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::AsyncFd => "async",
            Protocol::Heartbeat => "heartbeat",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub protocol: Protocol,
    /// Crash bound the detector is configured for.
    pub f: usize,
    /// Range density handed to the detector; the topology's measured density
    /// when `None`.
    pub density: Option<usize>,
    /// Mean one-hop delay.
    pub delay_mean: Duration,
    /// Harvest window after a satisfied round, and the heartbeat period.
    pub round_delta: Duration,
    /// Heartbeat timeout.
    pub theta: Duration,
    pub seed: u64,
    pub duration: Duration,
    /// Enables known-set pruning on relayed mistakes.
    pub mobility: bool,
    /// Node whose responses always take the fastest path.
    pub rp_node: Option<NodeId>,
}

impl SimConfig {
    pub fn new(protocol: Protocol, f: usize) -> Self {
        Self {
            protocol,
            f,
            density: None,
            delay_mean: Duration::from_millis(1),
            round_delta: Duration::from_secs(1),
            theta: Duration::from_secs(2),
            seed: 0,
            duration: Duration::from_secs(1800),
            mobility: false,
            rp_node: None,
        }
    }
}

/// Externally injected events.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Injection {
    Crash {
        node: NodeId,
        at: Duration,
    },
    /// Detach at `start`, reattach at `destination` at `end`.
    Move {
        node: NodeId,
        start: Duration,
        end: Duration,
        destination: Point,
    },
}

impl Injection {
    /// A straight move from `from` to `to` at `speed` meters per second.
    pub fn move_at_speed(node: NodeId, start: Duration, speed: f64, from: Point, to: Point) -> Self {
        let travel = if speed > 0.0 { from.distance(to) / speed } else { 0.0 };
        Injection::Move {
            node,
            start,
            end: start + Duration::from_secs_f64(travel),
            destination: to,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("schedule refers to unknown node {0}")]
    UnknownNode(NodeId),
    #[error("schedule event at {at:?} lies beyond the run duration {duration:?}")]
    BeyondDuration { at: Duration, duration: Duration },
    #[error("moves of node {0} overlap")]
    OverlappingMoves(NodeId),
    #[error("move of node {0} must end after it starts")]
    EmptyMove(NodeId),
    #[error("topology is not {0}-covering")]
    NotCovering(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error(transparent)]
    Heartbeat(#[from] HbError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtoState {
    Fd(FdState),
    Hb(HbState),
}

/// A suspicion or mistake at the moment it was created.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Origin {
    pub time: Duration,
    pub creator: NodeId,
    pub entry: TaggedEntry,
    pub kind: OriginKind,
    /// Whether the suspected node was in the creator's known set.
    pub was_known: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OriginKind {
    Suspicion,
    Mistake,
}

/// Protocol state of a mover when it detached and when it reattached.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveSnapshot {
    pub node: NodeId,
    pub detached_at: Duration,
    pub reattached_at: Duration,
    pub at_detach: ProtoState,
    pub at_reattach: ProtoState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub messages: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub timeline: Timeline,
    pub witness: PropertyWitness,
    pub origins: Vec<Origin>,
    pub moves: Vec<MoveSnapshot>,
    pub crashes: Vec<Crash>,
    /// Protocol states at the end of the run.
    pub finals: Vec<ProtoState>,
    pub stats: RunStats,
    /// Range density the detector was configured with.
    pub density: usize,
}

#[derive(Clone, Debug)]
enum Msg {
    Query(Rc<QueryMsg>),
    Response(ResponseMsg),
    Heartbeat(Rc<HeartbeatMsg>),
}

#[derive(Clone, Debug)]
enum Kind {
    Deliver { to: NodeId, from: NodeId, msg: Msg },
    RoundStart(NodeId),
    HarvestEnd { node: NodeId, round_id: u64 },
    HbTick(NodeId),
    HbCheck(NodeId),
    Crash(NodeId),
    MoveStart(NodeId),
    MoveEnd { node: NodeId, destination: Point },
}

struct Event {
    time: Duration,
    seq: u64,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that the max-heap pops the earliest event.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Up,
    Moving,
    Crashed,
}

struct Node {
    status: Status,
    proto: ProtoState,
    reported: BTreeSet<NodeId>,
    hb_check_at: Option<Duration>,
    heard_from: BTreeSet<NodeId>,
    announced: bool,
    pending_move: Option<(Duration, ProtoState)>,
}

/// Uniform one-hop delay on `[mean/2, 3*mean/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DelaySampler {
    lo: u64,
    hi: u64,
}

impl DelaySampler {
    pub fn new(mean: Duration) -> Self {
        let nanos = mean.as_nanos() as u64;
        Self {
            lo: nanos / 2,
            hi: nanos + nanos / 2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Duration {
        Duration::from_nanos(rng.gen_range(self.lo..=self.hi))
    }

    /// Strictly below anything [`DelaySampler::sample`] can return.
    pub fn priority(&self) -> Duration {
        Duration::from_nanos(self.lo / 2)
    }

    pub fn bounds(&self) -> (Duration, Duration) {
        (Duration::from_nanos(self.lo), Duration::from_nanos(self.hi))
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    top: Topology,
    nodes: Vec<Node>,
    queue: BinaryHeap<Event>,
    seq: u64,
    now: Duration,
    rng: ChaCha8Rng,
    delays: DelaySampler,
    timeline: Timeline,
    witness: PropertyWitness,
    origins: Vec<Origin>,
    moves: Vec<MoveSnapshot>,
    crashes: Vec<Crash>,
    density: usize,
    stats: RunStats,
}

/// Runs one simulation to `config.duration`.
pub fn run(config: &SimConfig, top: &Topology, schedule: &[Injection]) -> Result<RunOutput, SimError> {
    validate(config, top, schedule)?;
    let mut sim = Sim::new(config, top)?;
    sim.start_nodes();
    sim.inject(schedule);
    sim.run_to_end();
    Ok(sim.finish())
}

fn validate(config: &SimConfig, top: &Topology, schedule: &[Injection]) -> Result<(), SimError> {
    if config.delay_mean.is_zero() || config.round_delta.is_zero() || config.theta.is_zero() {
        return Err(SimError::Config("all durations must be positive".into()));
    }
    if top.is_empty() {
        return Err(SimError::Config("empty topology".into()));
    }
    if !top.is_f_covering(config.f) {
        return Err(SimError::NotCovering(config.f));
    }
    let mut moves: BTreeMap<NodeId, Vec<(Duration, Duration)>> = BTreeMap::new();
    for inj in schedule {
        let (node, last) = match *inj {
            Injection::Crash { node, at } => (node, at),
            Injection::Move {
                node,
                start,
                end,
                destination,
            } => {
                if end < start {
                    return Err(SimError::EmptyMove(node));
                }
                if end == start {
                    let here = top.position(node).map_err(|_| SimError::UnknownNode(node))?;
                    if here != destination {
                        return Err(SimError::EmptyMove(node));
                    }
                }
                moves.entry(node).or_default().push((start, end));
                (node, end)
            }
        };
        if node.index() >= top.len() {
            return Err(SimError::UnknownNode(node));
        }
        if last > config.duration {
            return Err(SimError::BeyondDuration {
                at: last,
                duration: config.duration,
            });
        }
    }
    for (node, mut spans) in moves {
        spans.sort();
        if spans.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(SimError::OverlappingMoves(node));
        }
    }
    Ok(())
}

impl<'a> Sim<'a> {
    fn new(config: &'a SimConfig, top: &Topology) -> Result<Self, SimError> {
        let density = match config.density {
            Some(d) => d,
            None => top.density()?,
        };
        let mut nodes = Vec::with_capacity(top.len());
        for id in top.nodes() {
            let proto = match config.protocol {
                Protocol::AsyncFd => ProtoState::Fd(FdState::new(id, config.f, density)?),
                Protocol::Heartbeat => {
                    ProtoState::Hb(HbState::new(id, config.round_delta, config.theta, Duration::ZERO)?)
                }
            };
            nodes.push(Node {
                status: Status::Up,
                proto,
                reported: BTreeSet::new(),
                hb_check_at: None,
                heard_from: BTreeSet::new(),
                announced: false,
                pending_move: None,
            });
        }
        let ids: Vec<NodeId> = top.nodes().collect();
        Ok(Sim {
            cfg: config,
            top: top.clone(),
            nodes,
            queue: BinaryHeap::new(),
            seq: 0,
            now: Duration::ZERO,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            delays: DelaySampler::new(config.delay_mean),
            timeline: Timeline::new(ids.clone(), config.duration),
            witness: PropertyWitness {
                nodes: ids,
                horizon: config.duration,
                ..Default::default()
            },
            origins: Vec::new(),
            moves: Vec::new(),
            crashes: Vec::new(),
            density,
            stats: RunStats::default(),
        })
    }

    /// Schedules every node's first round or heartbeat at a random phase in
    /// `[0, delta)`, so that nodes do not run in lockstep.
    fn start_nodes(&mut self) {
        let period = self.cfg.round_delta.as_nanos() as u64;
        for id in self.top.nodes() {
            let offset = Duration::from_nanos(self.rng.gen_range(0..period.max(1)));
            match self.cfg.protocol {
                Protocol::AsyncFd => self.push(offset, Kind::RoundStart(id)),
                Protocol::Heartbeat => {
                    if let ProtoState::Hb(hb) = &mut self.nodes[id.index()].proto {
                        hb.resume(offset);
                    }
                    self.push(offset, Kind::HbTick(id));
                }
            }
            self.record_neighborhood(id);
        }
    }

    fn inject(&mut self, schedule: &[Injection]) {
        for inj in schedule {
            match *inj {
                Injection::Crash { node, at } => {
                    self.crashes.push(Crash { node, time: at });
                    self.push(at, Kind::Crash(node));
                }
                Injection::Move {
                    node,
                    start,
                    end,
                    destination,
                } => {
                    if start == end {
                        continue;
                    }
                    self.push(start, Kind::MoveStart(node));
                    self.push(end, Kind::MoveEnd { node, destination });
                }
            }
        }
        self.crashes.sort();
        self.witness.crashes = self.crashes.clone();
    }

    fn run_to_end(&mut self) {
        while let Some(event) = self.queue.pop() {
            if event.time > self.cfg.duration {
                break;
            }
            self.now = event.time;
            self.stats.events += 1;
            self.handle(event.kind);
        }
    }

    fn finish(self) -> RunOutput {
        RunOutput {
            timeline: self.timeline,
            witness: self.witness,
            origins: self.origins,
            moves: self.moves,
            crashes: self.crashes,
            finals: self.nodes.into_iter().map(|n| n.proto).collect(),
            stats: self.stats,
            density: self.density,
        }
    }
}

impl Sim<'_> {
    fn push(&mut self, time: Duration, kind: Kind) {
        if time > self.cfg.duration {
            return;
        }
        self.seq += 1;
        self.queue.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }

    fn is_up(&self, id: NodeId) -> bool {
        self.nodes[id.index()].status == Status::Up
    }

    fn handle(&mut self, kind: Kind) {
        match kind {
            Kind::Deliver { to, from, msg } => self.deliver(to, from, msg),
            Kind::RoundStart(id) => {
                if self.is_up(id) {
                    self.start_round(id);
                }
            }
            Kind::HarvestEnd { node, round_id } => self.harvest_end(node, round_id),
            Kind::HbTick(id) => self.hb_tick(id),
            Kind::HbCheck(id) => self.hb_check(id),
            Kind::Crash(id) => {
                self.nodes[id.index()].status = Status::Crashed;
            }
            Kind::MoveStart(id) => self.move_start(id),
            Kind::MoveEnd { node, destination } => self.move_end(node, destination),
        }
    }

    /// Sends `msg` to every attached, live neighbour of `from`.
    fn broadcast(&mut self, from: NodeId, msg: Msg) {
        let targets: Vec<NodeId> = match self.top.neighbors(from) {
            Ok(it) => it.collect(),
            Err(_) => return,
        };
        for to in targets {
            if !self.is_up(to) {
                continue;
            }
            let delay = self.delays.sample(&mut self.rng);
            self.stats.messages += 1;
            self.push(
                self.now + delay,
                Kind::Deliver {
                    to,
                    from,
                    msg: msg.clone(),
                },
            );
        }
        let node = &mut self.nodes[from.index()];
        if !node.announced {
            node.announced = true;
            self.witness.announcements.push((self.now, from));
        }
    }

    fn send(&mut self, from: NodeId, to: NodeId, msg: Msg) {
        let delay = if self.cfg.rp_node == Some(from) {
            self.delays.priority()
        } else {
            self.delays.sample(&mut self.rng)
        };
        self.stats.messages += 1;
        self.push(self.now + delay, Kind::Deliver { to, from, msg });
    }

    fn deliver(&mut self, to: NodeId, from: NodeId, msg: Msg) {
        if !self.is_up(to) {
            return;
        }
        match msg {
            Msg::Query(q) => {
                self.note_receipt(to, from);
                let mobility = self.cfg.mobility;
                let ProtoState::Fd(fd) = &mut self.nodes[to.index()].proto else {
                    return;
                };
                let had_mistake = fd.mistake().tag_of(to);
                let resp = fd.handle_query(&q, mobility);
                let made = fd.mistake().tag_of(to);
                if made != had_mistake {
                    if let Some(tag) = made {
                        self.origins.push(Origin {
                            time: self.now,
                            creator: to,
                            entry: TaggedEntry::new(to, tag),
                            kind: OriginKind::Mistake,
                            was_known: false,
                        });
                    }
                }
                self.send(to, from, Msg::Response(resp));
                self.refresh_output(to);
            }
            Msg::Response(resp) => {
                let round_delta = self.cfg.round_delta;
                let ProtoState::Fd(fd) = &mut self.nodes[to.index()].proto else {
                    return;
                };
                match fd.round_status() {
                    Some(RoundStatus::Pending) => {
                        if let Ok(RoundStatus::Satisfied) = fd.on_response(&resp) {
                            let round_id = fd.round_id();
                            self.push(self.now + round_delta, Kind::HarvestEnd { node: to, round_id });
                        }
                    }
                    Some(RoundStatus::Satisfied) => {
                        let _ = fd.harvest_response(&resp);
                    }
                    None => {}
                }
            }
            Msg::Heartbeat(hb) => {
                self.note_receipt(to, from);
                let now = self.now;
                let ProtoState::Hb(state) = &mut self.nodes[to.index()].proto else {
                    return;
                };
                state.receive(&hb, now);
                // Receiving can only clear suspicions, and deadlines only move
                // later, so a pending check stays valid.
                let node = &mut self.nodes[to.index()];
                let ProtoState::Hb(state) = &node.proto else { return };
                if node
                    .reported
                    .iter()
                    .any(|t| state.deadlines().get(t).is_some_and(|&d| d > now))
                {
                    self.refresh_output(to);
                }
                if self.nodes[to.index()].hb_check_at.is_none_or(|at| at < now) {
                    self.arm_hb_check(to);
                }
            }
        }
    }

    fn note_receipt(&mut self, receiver: NodeId, sender: NodeId) {
        if self.nodes[receiver.index()].heard_from.insert(sender) {
            self.witness.receipts.push(Receipt {
                time: self.now,
                receiver,
                sender,
            });
        }
    }

    fn start_round(&mut self, id: NodeId) {
        let ProtoState::Fd(fd) = &mut self.nodes[id.index()].proto else {
            return;
        };
        let Ok(query) = fd.begin_round() else { return };
        self.broadcast(id, Msg::Query(Rc::new(query)));
    }

    fn harvest_end(&mut self, id: NodeId, round_id: u64) {
        if !self.is_up(id) {
            return;
        }
        let now = self.now;
        let ProtoState::Fd(fd) = &mut self.nodes[id.index()].proto else {
            return;
        };
        if fd.round_id() != round_id {
            return;
        }
        let rec_from = fd.rec_from().clone();
        let known = fd.known().clone();
        let Ok(generated) = fd.finish_round() else { return };
        for entry in generated {
            self.origins.push(Origin {
                time: now,
                creator: id,
                entry,
                kind: OriginKind::Suspicion,
                was_known: known.contains(&entry.node),
            });
        }
        let silent: Vec<NodeId> = self
            .top
            .neighbors(id)
            .map(|it| {
                it.filter(|n| !rec_from.contains(n) && self.nodes[n.index()].status != Status::Moving)
                    .collect()
            })
            .unwrap_or_default();
        self.witness.rounds.push(RoundRecord {
            node: id,
            finished: now,
            silent_neighbors: silent,
        });
        self.refresh_output(id);
        self.start_round(id);
    }

    fn hb_tick(&mut self, id: NodeId) {
        if !self.is_up(id) {
            return;
        }
        let now = self.now;
        let ProtoState::Hb(hb) = &mut self.nodes[id.index()].proto else {
            return;
        };
        let emitted = hb.tick(now);
        let next = hb.next_emit();
        if let Some(msg) = emitted {
            self.witness.rounds.push(RoundRecord {
                node: id,
                finished: now,
                silent_neighbors: Vec::new(),
            });
            self.broadcast(id, Msg::Heartbeat(Rc::new(msg)));
        }
        self.push(next, Kind::HbTick(id));
        self.refresh_output(id);
        self.arm_hb_check(id);
    }

    fn hb_check(&mut self, id: NodeId) {
        if !self.is_up(id) || self.nodes[id.index()].hb_check_at != Some(self.now) {
            return;
        }
        self.nodes[id.index()].hb_check_at = None;
        self.refresh_output(id);
        self.arm_hb_check(id);
    }

    /// Makes sure a check is pending for the node's next timeout expiry.
    fn arm_hb_check(&mut self, id: NodeId) {
        let now = self.now;
        let node = &mut self.nodes[id.index()];
        let ProtoState::Hb(hb) = &node.proto else { return };
        let Some(next) = hb.next_expiry(now) else { return };
        if node.hb_check_at.is_some_and(|at| at >= now && at <= next) {
            return;
        }
        node.hb_check_at = Some(next);
        self.push(next, Kind::HbCheck(id));
    }

    fn move_start(&mut self, id: NodeId) {
        if !self.is_up(id) {
            return;
        }
        let old: Vec<NodeId> = self.top.neighbors(id).map(|it| it.collect()).unwrap_or_default();
        let node = &mut self.nodes[id.index()];
        node.status = Status::Moving;
        node.pending_move = Some((self.now, node.proto.clone()));
        self.record_neighborhood(id);
        for n in old {
            self.record_neighborhood(n);
        }
    }

    fn move_end(&mut self, id: NodeId, destination: Point) {
        if self.nodes[id.index()].status != Status::Moving {
            return;
        }
        let old: Vec<NodeId> = self.top.neighbors(id).map(|it| it.collect()).unwrap_or_default();
        if self.top.relocate(id, destination).is_err() {
            return;
        }
        let now = self.now;
        let node = &mut self.nodes[id.index()];
        node.status = Status::Up;
        node.heard_from.clear();
        node.announced = false;
        node.hb_check_at = None;
        if let Some((detached_at, at_detach)) = node.pending_move.take() {
            self.moves.push(MoveSnapshot {
                node: id,
                detached_at,
                reattached_at: now,
                at_detach,
                at_reattach: node.proto.clone(),
            });
        }
        self.witness.reattachments.push((now, id));
        let new: Vec<NodeId> = self.top.neighbors(id).map(|it| it.collect()).unwrap_or_default();
        let touched: BTreeSet<NodeId> = old.into_iter().chain(new).chain([id]).collect();
        for n in touched {
            self.record_neighborhood(n);
        }

        match &mut self.nodes[id.index()].proto {
            ProtoState::Fd(fd) => {
                fd.abandon_round();
                self.start_round(id);
            }
            ProtoState::Hb(hb) => {
                hb.resume(now);
                self.hb_tick(id);
            }
        }
    }

    /// Current attached neighbourhood of `id` (empty while it moves).
    fn attached_neighbors(&self, id: NodeId) -> Vec<NodeId> {
        if self.nodes[id.index()].status == Status::Moving {
            return Vec::new();
        }
        self.top
            .neighbors(id)
            .map(|it| it.filter(|n| self.nodes[n.index()].status != Status::Moving).collect())
            .unwrap_or_default()
    }

    fn record_neighborhood(&mut self, id: NodeId) {
        let neighbors = self.attached_neighbors(id);
        self.witness.neighborhoods.push(NeighborhoodRecord {
            time: self.now,
            node: id,
            neighbors,
        });
    }

    /// Logs the difference between the node's detector output and what was
    /// last logged for it.
    fn refresh_output(&mut self, id: NodeId) {
        let now = self.now;
        let node = &mut self.nodes[id.index()];
        let current = match &node.proto {
            ProtoState::Fd(fd) => {
                if node.reported.iter().copied().eq(fd.suspected().nodes()) {
                    return;
                }
                fd.suspicions()
            }
            ProtoState::Hb(hb) => hb.suspicions(now),
        };
        if current == node.reported {
            return;
        }
        let mut changes: Vec<(NodeId, Change)> = current
            .difference(&node.reported)
            .map(|&t| (t, Change::Suspect))
            .chain(node.reported.difference(&current).map(|&t| (t, Change::Unsuspect)))
            .collect();
        changes.sort();
        for (target, change) in changes {
            self.timeline.records.push(SuspicionRecord {
                time: now,
                observer: id,
                target,
                change,
            });
        }
        node.reported = current;
    }
}
