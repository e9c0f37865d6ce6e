//! Gossip-heartbeat failure detector used as the timer-based baseline.
//!
//! Every `delta` a node bumps its own entry of a heartbeat vector and
//! broadcasts the whole vector. Receivers keep the pointwise maximum and
//! re-arm a `theta` timeout for every entry that grew. A node whose timeout
//! expired is suspected.
//!
//! Membership is learned lazily: a node is only tracked after it first shows
//! up in some received vector.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use thiserror::Error;

use crate::fd::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HbError {
    #[error("timeout {theta:?} must exceed the gossip period {delta:?}")]
    TimeoutTooShort { delta: Duration, theta: Duration },
}

/// Highest known heartbeat per node, kept sorted by node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HbVector(Vec<(NodeId, u64)>);

impl HbVector {
    pub fn get(&self, node: NodeId) -> Option<u64> {
        self.0
            .binary_search_by_key(&node, |&(n, _)| n)
            .ok()
            .map(|i| self.0[i].1)
    }

    fn get_mut(&mut self, node: NodeId) -> Option<&mut u64> {
        let i = self.0.binary_search_by_key(&node, |&(n, _)| n).ok()?;
        Some(&mut self.0[i].1)
    }

    pub fn insert(&mut self, node: NodeId, beat: u64) {
        match self.0.binary_search_by_key(&node, |&(n, _)| n) {
            Ok(i) => self.0[i].1 = beat,
            Err(i) => self.0.insert(i, (node, beat)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(NodeId, u64)> for HbVector {
    fn from_iter<I: IntoIterator<Item = (NodeId, u64)>>(iter: I) -> Self {
        let map: BTreeMap<NodeId, u64> = iter.into_iter().collect();
        HbVector(map.into_iter().collect())
    }
}

impl std::ops::Index<&NodeId> for HbVector {
    type Output = u64;

    fn index(&self, node: &NodeId) -> &u64 {
        let i = self
            .0
            .binary_search_by_key(node, |&(n, _)| n)
            .expect("node not in heartbeat vector");
        &self.0[i].1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeartbeatMsg {
    pub sender: NodeId,
    pub vector: HbVector,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HbState {
    id: NodeId,
    vector: HbVector,
    deadlines: BTreeMap<NodeId, Duration>,
    delta: Duration,
    theta: Duration,
    next_emit: Duration,
}

impl HbState {
    pub fn new(id: NodeId, delta: Duration, theta: Duration, now: Duration) -> Result<Self, HbError> {
        if theta <= delta {
            return Err(HbError::TimeoutTooShort { delta, theta });
        }
        Ok(Self {
            id,
            vector: HbVector(vec![(id, 0)]),
            deadlines: BTreeMap::new(),
            delta,
            theta,
            next_emit: now,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn vector(&self) -> &HbVector {
        &self.vector
    }

    pub fn deadlines(&self) -> &BTreeMap<NodeId, Duration> {
        &self.deadlines
    }

    pub fn next_emit(&self) -> Duration {
        self.next_emit
    }

    pub fn delta(&self) -> Duration {
        self.delta
    }

    /// Emits a heartbeat if one is due.
    pub fn tick(&mut self, now: Duration) -> Option<HeartbeatMsg> {
        if now < self.next_emit {
            return None;
        }
        match self.vector.get_mut(self.id) {
            Some(beat) => *beat += 1,
            None => self.vector.insert(self.id, 1),
        }
        self.next_emit += self.delta;
        Some(HeartbeatMsg {
            sender: self.id,
            vector: self.vector.clone(),
        })
    }

    /// Restarts the emission schedule at `now` after the node was suspended.
    pub fn resume(&mut self, now: Duration) {
        self.next_emit = now;
    }

    pub fn receive(&mut self, msg: &HeartbeatMsg, now: Duration) {
        // Both vectors are sorted by node: merge in one pass.
        let deadline = now + self.theta;
        let local = &mut self.vector.0;
        let mut unseen = Vec::new();
        let mut i = 0;
        for &(node, beat) in &msg.vector.0 {
            while i < local.len() && local[i].0 < node {
                i += 1;
            }
            if i < local.len() && local[i].0 == node {
                if local[i].1 < beat {
                    local[i].1 = beat;
                    if node != self.id {
                        self.deadlines.insert(node, deadline);
                    }
                }
            } else {
                unseen.push((node, beat));
            }
        }
        for (node, beat) in unseen {
            self.vector.insert(node, beat);
            if node != self.id {
                self.deadlines.insert(node, deadline);
            }
        }
    }

    pub fn suspicions(&self, now: Duration) -> BTreeSet<NodeId> {
        self.deadlines
            .iter()
            .filter(|&(&node, &deadline)| node != self.id && deadline <= now)
            .map(|(&node, _)| node)
            .collect()
    }

    /// Earliest deadline strictly after `now`, i.e. the next instant at which
    /// the suspicion output can change without any message arriving.
    pub fn next_expiry(&self, now: Duration) -> Option<Duration> {
        self.deadlines.values().copied().filter(|&d| d > now).min()
    }
}
