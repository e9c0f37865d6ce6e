//! Post-processing of simulation logs: detection delays, false-suspicion
//! counts, failure-detector class checks and behavioural-assumption checks.
//!
//! Everything here is a pure function of the recorded logs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Duration;

use thiserror::Error;

use crate::fd::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Change {
    Suspect,
    Unsuspect,
}

impl Change {
    pub fn as_str(self) -> &'static str {
        match self {
            Change::Suspect => "suspect",
            Change::Unsuspect => "unsuspect",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SuspicionRecord {
    pub time: Duration,
    pub observer: NodeId,
    pub target: NodeId,
    pub change: Change,
}

/// Every change of every node's detector output, in time order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Timeline {
    pub nodes: Vec<NodeId>,
    pub horizon: Duration,
    pub records: Vec<SuspicionRecord>,
}

/// Seconds with nanosecond precision, e.g. `100.001234567`.
pub fn fmt_time(t: Duration) -> String {
    format!("{}.{:09}", t.as_secs(), t.subsec_nanos())
}

pub fn secs(t: Duration) -> f64 {
    t.as_secs_f64()
}

impl Timeline {
    pub fn new(nodes: Vec<NodeId>, horizon: Duration) -> Self {
        Self {
            nodes,
            horizon,
            records: Vec::new(),
        }
    }

    /// One line per record: `time kind observer target`.
    pub fn to_log(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 32);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                fmt_time(r.time),
                r.change.as_str(),
                r.observer,
                r.target
            );
        }
        out
    }

    /// Records sorted by time; the sort is stable so per-pair order is kept.
    fn ordered(&self) -> Vec<SuspicionRecord> {
        let mut recs = self.records.clone();
        recs.sort_by_key(|r| r.time);
        recs
    }

    /// Last record of every (observer, target) pair.
    fn last_per_pair(&self) -> BTreeMap<(NodeId, NodeId), SuspicionRecord> {
        let mut last = BTreeMap::new();
        for r in self.ordered() {
            last.insert((r.observer, r.target), r);
        }
        last
    }

    /// Whether every pair alternates suspect/unsuspect starting with suspect.
    pub fn is_well_formed(&self) -> bool {
        let mut state: BTreeMap<(NodeId, NodeId), Change> = BTreeMap::new();
        for r in self.ordered() {
            let prev = state.insert((r.observer, r.target), r.change);
            let ok = match (prev, r.change) {
                (None, Change::Suspect) | (Some(Change::Unsuspect), Change::Suspect) => true,
                (Some(Change::Suspect), Change::Unsuspect) => true,
                _ => false,
            };
            if !ok {
                return false;
            }
        }
        true
    }
}

/// A scheduled crash.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Crash {
    pub node: NodeId,
    pub time: Duration,
}

fn crash_time(crashes: &[Crash], node: NodeId) -> Option<Duration> {
    crashes.iter().filter(|c| c.node == node).map(|c| c.time).min()
}

fn crashed_by(crashes: &[Crash], node: NodeId, t: Duration) -> bool {
    crash_time(crashes, node).is_some_and(|c| c <= t)
}

fn correct_observers<'a>(timeline: &'a Timeline, crashes: &'a [Crash]) -> impl Iterator<Item = NodeId> + 'a {
    timeline
        .nodes
        .iter()
        .copied()
        .filter(move |&n| crash_time(crashes, n).is_none())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("correct node {observer} never permanently suspects crashed node {target}")]
    NeverSuspected { observer: NodeId, target: NodeId },
    #[error("designated node {0} crashed; accuracy is undefined")]
    RpCrashed(NodeId),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    pub samples: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let sum: f64 = values.iter().sum();
        Some(Self {
            mean: sum / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            samples: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrashDetection {
    pub crash: Crash,
    /// Detection delay in seconds per correct observer.
    pub delays: BTreeMap<NodeId, f64>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionStats {
    pub per_crash: Vec<CrashDetection>,
    pub overall: Option<Summary>,
}

impl DetectionStats {
    pub fn all_delays(&self) -> Vec<f64> {
        self.per_crash.iter().flat_map(|c| c.delays.values().copied()).collect()
    }
}

/// `crash,time,observers,mean,max,min`, one row per crash and a final
/// `all` row.
pub fn detection_csv(stats: &DetectionStats) -> String {
    let mut out = String::from("crash,time,observers,mean,max,min\n");
    let row = |out: &mut String, label: &str, time: &str, s: &Summary| {
        out.push_str(&format!(
            "{label},{time},{},{:.6},{:.6},{:.6}\n",
            s.samples, s.mean, s.max, s.min
        ));
    };
    for c in &stats.per_crash {
        row(&mut out, &c.crash.node.to_string(), &fmt_time(c.crash.time), &c.summary);
    }
    if let Some(all) = &stats.overall {
        row(&mut out, "all", "", all);
    }
    out
}

/// Detection delay per crash and correct observer: time of the suspicion
/// that is never revoked, minus the crash time.
pub fn detection_stats(timeline: &Timeline, crashes: &[Crash]) -> Result<DetectionStats, MetricsError> {
    let last = timeline.last_per_pair();
    let mut per_crash = Vec::new();
    for &crash in crashes {
        let mut delays = BTreeMap::new();
        for observer in correct_observers(timeline, crashes) {
            match last.get(&(observer, crash.node)) {
                Some(r) if r.change == Change::Suspect => {
                    delays.insert(observer, r.time.as_secs_f64() - crash.time.as_secs_f64());
                }
                _ => {
                    return Err(MetricsError::NeverSuspected {
                        observer,
                        target: crash.node,
                    })
                }
            }
        }
        let values: Vec<f64> = delays.values().copied().collect();
        let Some(summary) = Summary::of(&values) else { continue };
        per_crash.push(CrashDetection { crash, delays, summary });
    }
    let all: Vec<f64> = per_crash.iter().flat_map(|c| c.delays.values().copied()).collect();
    Ok(DetectionStats {
        per_crash,
        overall: Summary::of(&all),
    })
}

/// Number of wrongly suspected (observer, target) pairs right after each
/// instant at which it may change. Observers and targets count only while
/// they have not crashed; a moving node is not crashed.
pub fn false_suspicion_steps(timeline: &Timeline, crashes: &[Crash]) -> Vec<(Duration, usize)> {
    let recs = timeline.ordered();
    let mut instants: BTreeSet<Duration> = recs.iter().map(|r| r.time).collect();
    instants.extend(crashes.iter().map(|c| c.time));
    instants.insert(Duration::ZERO);
    let mut active: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut idx = 0;
    let mut steps = Vec::with_capacity(instants.len());
    for t in instants {
        while idx < recs.len() && recs[idx].time <= t {
            let r = recs[idx];
            match r.change {
                Change::Suspect => active.insert((r.observer, r.target)),
                Change::Unsuspect => active.remove(&(r.observer, r.target)),
            };
            idx += 1;
        }
        let count = active
            .iter()
            .filter(|(o, x)| !crashed_by(crashes, *o, t) && !crashed_by(crashes, *x, t))
            .count();
        steps.push((t, count));
    }
    steps
}

fn value_at(steps: &[(Duration, usize)], t: Duration) -> usize {
    let idx = steps.partition_point(|(s, _)| *s <= t);
    if idx == 0 {
        0
    } else {
        steps[idx - 1].1
    }
}

/// False-suspicion count sampled every `step` from 0 to the horizon.
pub fn false_suspicion_series(timeline: &Timeline, crashes: &[Crash], step: Duration) -> Vec<(Duration, usize)> {
    let steps = false_suspicion_steps(timeline, crashes);
    let mut series = Vec::new();
    if step.is_zero() {
        return series;
    }
    let mut t = Duration::ZERO;
    while t <= timeline.horizon {
        series.push((t, value_at(&steps, t)));
        t += step;
    }
    series
}

/// Number of live observers suspecting `target` after each change.
pub fn suspecting_steps(timeline: &Timeline, target: NodeId, crashes: &[Crash]) -> Vec<(Duration, usize)> {
    let mut active: BTreeSet<NodeId> = BTreeSet::new();
    let mut steps: Vec<(Duration, usize)> = Vec::new();
    let mut events: Vec<(Duration, Option<SuspicionRecord>)> = timeline
        .ordered()
        .into_iter()
        .filter(|r| r.target == target)
        .map(|r| (r.time, Some(r)))
        .collect();
    events.extend(crashes.iter().map(|c| (c.time, None)));
    events.sort_by_key(|(t, _)| *t);
    for (t, rec) in events {
        if let Some(r) = rec {
            match r.change {
                Change::Suspect => active.insert(r.observer),
                Change::Unsuspect => active.remove(&r.observer),
            };
        }
        let count = active.iter().filter(|&&o| !crashed_by(crashes, o, t)).count();
        match steps.last_mut() {
            Some(last) if last.0 == t => last.1 = count,
            _ => steps.push((t, count)),
        }
    }
    steps
}

/// Time of the last transition of `steps` to zero, if it ends at zero.
pub fn last_clear_time(steps: &[(Duration, usize)]) -> Option<Duration> {
    if steps.last().is_some_and(|&(_, c)| c != 0) {
        return None;
    }
    let mut cleared = None;
    let mut prev = 0;
    for &(t, c) in steps {
        if prev > 0 && c == 0 {
            cleared = Some(t);
        }
        prev = c;
    }
    cleared
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompletenessVerdict {
    /// (observer, crashed target) pairs that are not permanently suspected.
    pub failures: Vec<(NodeId, NodeId)>,
    pub checked: usize,
}

impl CompletenessVerdict {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Every correct observer must end with each crashed node suspected, the
/// last change being at least `quiet` before `horizon`.
pub fn check_strong_completeness(
    timeline: &Timeline,
    crashes: &[Crash],
    horizon: Duration,
    quiet: Duration,
) -> CompletenessVerdict {
    let mut last: BTreeMap<(NodeId, NodeId), SuspicionRecord> = BTreeMap::new();
    for r in timeline.ordered() {
        if r.time <= horizon {
            last.insert((r.observer, r.target), r);
        }
    }
    let mut verdict = CompletenessVerdict::default();
    let targets: BTreeSet<NodeId> = crashes.iter().filter(|c| c.time <= horizon).map(|c| c.node).collect();
    for &target in &targets {
        for observer in correct_observers(timeline, crashes) {
            verdict.checked += 1;
            let settled = last
                .get(&(observer, target))
                .is_some_and(|r| r.change == Change::Suspect && r.time + quiet <= horizon);
            if !settled {
                verdict.failures.push((observer, target));
            }
        }
    }
    verdict
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccuracyVerdict {
    /// Correct observers suspecting the designated node after stabilization,
    /// with the first offending instant.
    pub offenders: Vec<(NodeId, Duration)>,
}

impl AccuracyVerdict {
    pub fn pass(&self) -> bool {
        self.offenders.is_empty()
    }
}

/// No correct observer may suspect `rp` at any instant after `stabilization`.
pub fn check_eventual_weak_accuracy(
    timeline: &Timeline,
    rp: NodeId,
    stabilization: Duration,
    crashes: &[Crash],
) -> Result<AccuracyVerdict, MetricsError> {
    if crash_time(crashes, rp).is_some() {
        return Err(MetricsError::RpCrashed(rp));
    }
    let correct: BTreeSet<NodeId> = correct_observers(timeline, crashes).collect();
    let mut suspecting: BTreeSet<NodeId> = BTreeSet::new();
    let mut offenders: BTreeMap<NodeId, Duration> = BTreeMap::new();
    for r in timeline.ordered() {
        if r.target != rp || !correct.contains(&r.observer) {
            continue;
        }
        if r.time > stabilization {
            // still suspected when stabilization passed
            for &o in &suspecting {
                offenders.entry(o).or_insert(stabilization);
            }
            if r.change == Change::Suspect {
                offenders.entry(r.observer).or_insert(r.time);
            }
        }
        match r.change {
            Change::Suspect => suspecting.insert(r.observer),
            Change::Unsuspect => suspecting.remove(&r.observer),
        };
    }
    for &o in &suspecting {
        offenders.entry(o).or_insert(stabilization);
    }
    Ok(AccuracyVerdict {
        offenders: offenders.into_iter().collect(),
    })
}

/// First time `receiver` got an announcement (query or heartbeat) from
/// `sender` since the receiver last (re)attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub time: Duration,
    pub receiver: NodeId,
    pub sender: NodeId,
}

/// A closed round (or, for the heartbeat baseline, an emission) and the
/// neighbours whose response did not make it into `rec_from`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundRecord {
    pub node: NodeId,
    pub finished: Duration,
    pub silent_neighbors: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborhoodRecord {
    pub time: Duration,
    pub node: NodeId,
    pub neighbors: Vec<NodeId>,
}

/// Raw material for the behavioural-property validators, gathered by the
/// simulator.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropertyWitness {
    pub nodes: Vec<NodeId>,
    pub horizon: Duration,
    /// First announcement per node per attachment period.
    pub announcements: Vec<(Duration, NodeId)>,
    pub receipts: Vec<Receipt>,
    pub rounds: Vec<RoundRecord>,
    pub neighborhoods: Vec<NeighborhoodRecord>,
    pub reattachments: Vec<(Duration, NodeId)>,
    pub crashes: Vec<Crash>,
}

impl PropertyWitness {
    /// Finish time of `node`'s `n`-th closed round (1-based).
    pub fn nth_round_end(&self, node: NodeId, n: usize) -> Option<Duration> {
        self.rounds
            .iter()
            .filter(|r| r.node == node)
            .nth(n.checked_sub(1)?)
            .map(|r| r.finished)
    }

    fn final_neighbors(&self, node: NodeId) -> Vec<NodeId> {
        self.neighborhoods
            .iter()
            .rev()
            .find(|r| r.node == node)
            .map(|r| r.neighbors.clone())
            .unwrap_or_default()
    }

    fn ever_lost_neighbor(&self, node: NodeId) -> bool {
        let mut prev: Option<&Vec<NodeId>> = None;
        for rec in self.neighborhoods.iter().filter(|r| r.node == node) {
            if let Some(p) = prev {
                if p.iter().any(|n| !rec.neighbors.contains(n)) {
                    return true;
                }
            }
            prev = Some(&rec.neighbors);
        }
        false
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BehavioralReport {
    /// Membership: the node's announcement reached more than f + 1 processes
    /// (itself included).
    pub mp: BTreeMap<NodeId, bool>,
    /// Responsiveness: from some point on, every round of every neighbour
    /// includes the node.
    pub rp: BTreeMap<NodeId, bool>,
    /// Mobility: after every reattachment the node hears from more than
    /// f + 1 processes (itself included). Only nodes that moved appear.
    pub mobip: BTreeMap<NodeId, bool>,
    /// Responsiveness plus a neighbourhood that never loses a member.
    pub mobirp: BTreeMap<NodeId, bool>,
}

pub fn validate_behavioral(witness: &PropertyWitness, f: usize) -> BehavioralReport {
    let mut report = BehavioralReport::default();

    let mut reached: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
    for &(_, node) in &witness.announcements {
        reached.entry(node).or_default().insert(node);
    }
    for r in &witness.receipts {
        reached.entry(r.sender).or_default().insert(r.receiver);
    }
    for &node in &witness.nodes {
        let k = reached.get(&node).map_or(0, BTreeSet::len);
        report.mp.insert(node, k > f + 1);
    }

    let mut last_violation: BTreeMap<NodeId, Duration> = BTreeMap::new();
    for round in &witness.rounds {
        for &silent in &round.silent_neighbors {
            last_violation.insert(silent, round.finished);
        }
    }
    for &node in &witness.nodes {
        let rp = if witness.crashes.iter().any(|c| c.node == node) {
            false
        } else {
            let since = last_violation.get(&node).copied();
            let neighbors: Vec<NodeId> = witness
                .final_neighbors(node)
                .into_iter()
                .filter(|j| !witness.crashes.iter().any(|c| c.node == *j))
                .collect();
            !neighbors.is_empty()
                && neighbors.iter().all(|&j| {
                    witness
                        .rounds
                        .iter()
                        .any(|r| r.node == j && since.is_none_or(|s| r.finished > s))
                })
        };
        report.rp.insert(node, rp);
        report.mobirp.insert(node, rp && !witness.ever_lost_neighbor(node));
    }

    let mut reattach: BTreeMap<NodeId, Vec<Duration>> = BTreeMap::new();
    for &(t, node) in &witness.reattachments {
        reattach.entry(node).or_default().push(t);
    }
    for (node, times) in reattach {
        let ok = times.iter().enumerate().all(|(i, &from)| {
            let until = times.get(i + 1).copied().unwrap_or(Duration::MAX);
            let mut heard: BTreeSet<NodeId> = witness
                .receipts
                .iter()
                .filter(|r| r.receiver == node && r.time >= from && r.time < until)
                .map(|r| r.sender)
                .collect();
            if witness
                .announcements
                .iter()
                .any(|&(t, n)| n == node && t >= from && t < until)
            {
                heard.insert(node);
            }
            heard.len() > f + 1
        });
        report.mobip.insert(node, ok);
    }
    report
}

/// Spearman rank correlation with average ranks for ties. `None` when
/// either side is constant or there are fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut out = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                out[k] = avg;
            }
            i = j + 1;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

/// `time,count` with a header line.
pub fn series_csv(series: &[(Duration, usize)]) -> String {
    let mut out = String::from("time,count\n");
    for &(t, c) in series {
        let _ = writeln!(out, "{},{}", fmt_time(t), c);
    }
    out
}
