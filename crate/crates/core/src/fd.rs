//! Timer-free failure detector driven by query-response rounds.
//!
//! A node periodically broadcasts a query carrying everything it currently
//! suspects and every suspicion it knows to have been wrong ("mistakes").
//! Once `d - f` distinct responses have arrived (its own included), every
//! known neighbour that stayed silent becomes suspected. Suspicions and
//! mistakes are stamped with the round counter of the node that produced
//! them, and receivers only adopt information carrying a fresher stamp.
//! A mistake can only be produced by the wrongly suspected node itself.
//!
//! [`FdState`] is a pure state machine: no clocks, no I/O. The caller
//! (normally [`crate::sim`]) decides when rounds start, delivers messages
//! and picks when a satisfied round is closed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Identifier of a process. Ordering is used for deterministic iteration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A `<node, counter>` pair stored in the suspected and mistake sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaggedEntry {
    pub node: NodeId,
    pub tag: u64,
}

impl TaggedEntry {
    pub fn new(node: NodeId, tag: u64) -> Self {
        Self { node, tag }
    }
}

/// Set of tagged entries holding at most one entry per node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TagSet(BTreeMap<NodeId, u64>);

impl TagSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `entry`, replacing any previous entry for the same node.
    pub fn add(&mut self, entry: TaggedEntry) {
        self.0.insert(entry.node, entry.tag);
    }

    pub fn remove(&mut self, node: NodeId) -> Option<u64> {
        self.0.remove(&node)
    }

    pub fn tag_of(&self, node: NodeId) -> Option<u64> {
        self.0.get(&node).copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.0.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Entries in ascending node order.
    pub fn iter(&self) -> impl Iterator<Item = TaggedEntry> + '_ {
        self.0.iter().map(|(&node, &tag)| TaggedEntry { node, tag })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.0.keys().copied()
    }
}

impl FromIterator<TaggedEntry> for TagSet {
    fn from_iter<I: IntoIterator<Item = TaggedEntry>>(iter: I) -> Self {
        let mut set = TagSet::new();
        for entry in iter {
            set.add(entry);
        }
        set
    }
}

/// Broadcast at the start of every round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryMsg {
    pub sender: NodeId,
    pub round_id: u64,
    pub suspected: TagSet,
    pub mistake: TagSet,
}

/// Point-to-point answer to a query; echoes the query's round id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResponseMsg {
    pub sender: NodeId,
    pub round_id: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundStatus {
    Pending,
    Satisfied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Closed,
    Open(RoundStatus),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FdError {
    #[error("range density {d} must exceed f + 1 = {}; the network cannot be f-covering", f + 1)]
    NotCovering { f: usize, d: usize },
    #[error("round {0} is still open")]
    RoundOpen(u64),
    #[error("no round is open")]
    NoOpenRound,
    #[error("round {0} has not received enough responses yet")]
    RoundNotSatisfied(u64),
}

/// Failure detector state of one process.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FdState {
    id: NodeId,
    f: usize,
    d: usize,
    counter: u64,
    suspected: TagSet,
    mistake: TagSet,
    known: BTreeSet<NodeId>,
    rec_from: BTreeSet<NodeId>,
    round_id: u64,
    phase: Phase,
}

impl FdState {
    pub fn new(id: NodeId, f: usize, d: usize) -> Result<Self, FdError> {
        if d <= f + 1 {
            return Err(FdError::NotCovering { f, d });
        }
        Ok(Self {
            id,
            f,
            d,
            counter: 0,
            suspected: TagSet::new(),
            mistake: TagSet::new(),
            known: BTreeSet::new(),
            rec_from: BTreeSet::new(),
            round_id: 0,
            phase: Phase::Closed,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    pub fn suspected(&self) -> &TagSet {
        &self.suspected
    }

    pub fn mistake(&self) -> &TagSet {
        &self.mistake
    }

    pub fn known(&self) -> &BTreeSet<NodeId> {
        &self.known
    }

    pub fn rec_from(&self) -> &BTreeSet<NodeId> {
        &self.rec_from
    }

    /// Number of distinct responses (own included) that satisfies a round.
    pub fn quorum(&self) -> usize {
        self.d - self.f
    }

    pub fn round_status(&self) -> Option<RoundStatus> {
        match self.phase {
            Phase::Closed => None,
            Phase::Open(status) => Some(status),
        }
    }

    pub fn is_round_open(&self) -> bool {
        self.phase != Phase::Closed
    }

    /// Opens a new round and returns the query to broadcast.
    ///
    /// The node's own response is counted immediately.
    pub fn begin_round(&mut self) -> Result<QueryMsg, FdError> {
        if self.is_round_open() {
            return Err(FdError::RoundOpen(self.round_id));
        }
        self.round_id += 1;
        self.rec_from.clear();
        self.rec_from.insert(self.id);
        self.phase = Phase::Open(self.status_for_count());
        Ok(QueryMsg {
            sender: self.id,
            round_id: self.round_id,
            suspected: self.suspected.clone(),
            mistake: self.mistake.clone(),
        })
    }

    fn status_for_count(&self) -> RoundStatus {
        if self.rec_from.len() >= self.quorum() {
            RoundStatus::Satisfied
        } else {
            RoundStatus::Pending
        }
    }

    /// Records a response. Responses for any other round are ignored.
    pub fn on_response(&mut self, resp: &ResponseMsg) -> Result<RoundStatus, FdError> {
        let Phase::Open(status) = self.phase else {
            return Err(FdError::NoOpenRound);
        };
        if resp.round_id != self.round_id {
            return Ok(status);
        }
        self.rec_from.insert(resp.sender);
        let status = self.status_for_count();
        self.phase = Phase::Open(status);
        Ok(status)
    }

    /// Records a late response that arrives after the round was satisfied but
    /// before it is closed.
    pub fn harvest_response(&mut self, resp: &ResponseMsg) -> Result<(), FdError> {
        match self.phase {
            Phase::Closed => Err(FdError::NoOpenRound),
            Phase::Open(RoundStatus::Pending) => Err(FdError::RoundNotSatisfied(self.round_id)),
            Phase::Open(RoundStatus::Satisfied) => {
                if resp.round_id == self.round_id {
                    self.rec_from.insert(resp.sender);
                }
                Ok(())
            }
        }
    }

    /// Closes a satisfied round: every known node that did not respond and is
    /// not already suspected becomes suspected with the current counter.
    ///
    /// Returns the suspicions generated by this round.
    pub fn finish_round(&mut self) -> Result<Vec<TaggedEntry>, FdError> {
        match self.phase {
            Phase::Closed => return Err(FdError::NoOpenRound),
            Phase::Open(RoundStatus::Pending) => return Err(FdError::RoundNotSatisfied(self.round_id)),
            Phase::Open(RoundStatus::Satisfied) => {}
        }
        let silent: Vec<NodeId> = self
            .known
            .difference(&self.rec_from)
            .copied()
            .filter(|node| !self.suspected.contains(*node))
            .collect();
        let mut generated = Vec::with_capacity(silent.len());
        for node in silent {
            if let Some(tag) = self.mistake.remove(node) {
                self.counter = self.counter.max(tag + 1);
            }
            let entry = TaggedEntry::new(node, self.counter);
            self.suspected.add(entry);
            generated.push(entry);
        }
        self.counter += 1;
        self.phase = Phase::Closed;
        Ok(generated)
    }

    /// Drops the open round without drawing any conclusion from it. Used when
    /// a node reattaches after moving: responses to its old query can no
    /// longer arrive.
    pub fn abandon_round(&mut self) {
        self.phase = Phase::Closed;
    }

    /// Merges the sets carried by `q` and answers it.
    ///
    /// With `mobility` set, a node learning a fresh mistake about some `x`
    /// from anyone but `x` itself drops `x` from its neighbourhood knowledge:
    /// `x` must be out of range, otherwise it would have been heard directly.
    pub fn handle_query(&mut self, q: &QueryMsg, mobility: bool) -> ResponseMsg {
        self.known.insert(q.sender);

        for entry in q.suspected.iter() {
            if !self.fresh_suspicion(entry) {
                continue;
            }
            if entry.node == self.id {
                self.counter = self.counter.max(entry.tag + 1);
                self.mistake.add(TaggedEntry::new(self.id, self.counter));
            } else {
                self.suspected.add(entry);
                self.mistake.remove(entry.node);
            }
        }

        for entry in q.mistake.iter() {
            if !self.fresh_mistake(entry) {
                continue;
            }
            self.mistake.add(entry);
            self.suspected.remove(entry.node);
            if mobility && entry.node != q.sender {
                self.known.remove(&entry.node);
            }
        }

        ResponseMsg {
            sender: self.id,
            round_id: q.round_id,
        }
    }

    fn fresh_suspicion(&self, entry: TaggedEntry) -> bool {
        let stored = self
            .suspected
            .tag_of(entry.node)
            .or_else(|| self.mistake.tag_of(entry.node));
        stored.is_none_or(|tag| tag < entry.tag)
    }

    // Equal tags favour the mistake over a stored suspicion, but an identical
    // stored mistake is not re-applied (keeps merging idempotent).
    fn fresh_mistake(&self, entry: TaggedEntry) -> bool {
        if let Some(tag) = self.suspected.tag_of(entry.node) {
            return tag <= entry.tag;
        }
        self.mistake.tag_of(entry.node).is_none_or(|tag| tag < entry.tag)
    }

    /// The detector's output: the processes currently suspected.
    pub fn suspicions(&self) -> BTreeSet<NodeId> {
        self.suspected.nodes().collect()
    }
}
