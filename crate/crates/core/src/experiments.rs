//! Experiment drivers shared by the command line and the test suites: the
//! density sweep, the single-mover scenario and the property-validation
//! suites.
//!
//! Every driver is a pure function of its parameters and seed. Topology and
//! simulation seeds are drawn from a ChaCha stream derived from the caller's
//! seed, so a report can always be regenerated bit for bit.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fd::NodeId;
use crate::metrics::{
    self, detection_stats, false_suspicion_steps, last_clear_time, suspecting_steps, AccuracyVerdict, Change,
    CompletenessVerdict, Crash, Summary,
};
use crate::sim::{run, Injection, Protocol, RunOutput, SimConfig, SimError};
use crate::topology::connectivity::is_k_connected;
use crate::topology::{
    designate_mover, generate_topology, GenError, GenParams, MoverRequirement, Point, Topology, TopologyError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

fn uniform_time<R: Rng + ?Sized>(rng: &mut R, from: Duration, to: Duration) -> Duration {
    let (lo, hi) = (from.as_nanos() as u64, to.as_nanos() as u64);
    Duration::from_nanos(rng.gen_range(lo..=hi.max(lo)))
}

/// `count` distinct nodes outside `exclude`, each crashing at a uniform time
/// in `window`.
pub fn uniform_crashes<R: Rng + ?Sized>(
    top: &Topology,
    count: usize,
    window: (Duration, Duration),
    exclude: &BTreeSet<NodeId>,
    rng: &mut R,
) -> Vec<Injection> {
    let pool: Vec<NodeId> = top.nodes().filter(|n| !exclude.contains(n)).collect();
    let victims: Vec<NodeId> = pool.choose_multiple(rng, count).copied().collect();
    victims
        .into_iter()
        .map(|node| Injection::Crash {
            node,
            at: uniform_time(rng, window.0, window.1),
        })
        .collect()
}

fn crashes_of(schedule: &[Injection]) -> Vec<Crash> {
    let mut crashes: Vec<Crash> = schedule
        .iter()
        .filter_map(|inj| match *inj {
            Injection::Crash { node, at } => Some(Crash { node, time: at }),
            Injection::Move { .. } => None,
        })
        .collect();
    crashes.sort();
    crashes
}

fn format_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// Density sweep

/// Lower bin edges of the density sweep, from 7 up to N/2 for N = 100.
pub const DENSITY_EDGES: [usize; 11] = [7, 10, 14, 18, 22, 26, 30, 35, 40, 45, 50];

#[derive(Clone, Debug, PartialEq)]
pub struct SweepParams {
    pub nodes: usize,
    pub f: usize,
    pub radius: f64,
    pub region_side: f64,
    /// Ascending lower edges. Bin `i` holds runs whose measured density lies
    /// in `[edges[i], edges[i + 1])`; the last bin is open-ended.
    pub edges: Vec<usize>,
    pub runs_per_bin: usize,
    /// Topology draws allowed per bin before it is reported short.
    pub max_draws: usize,
    pub crashes: usize,
    /// Template for every run; protocol and seed are overwritten.
    pub sim: SimConfig,
    /// Crashes fall uniformly in `[warmup, duration - tail]`.
    pub warmup: Duration,
    pub tail: Duration,
    pub seed: u64,
}

impl SweepParams {
    pub fn new(seed: u64) -> Self {
        Self {
            nodes: 100,
            f: 5,
            radius: 100.0,
            region_side: 700.0,
            edges: DENSITY_EDGES.to_vec(),
            runs_per_bin: 10,
            max_draws: 200,
            crashes: 5,
            sim: SimConfig::new(Protocol::AsyncFd, 5),
            warmup: Duration::from_secs(10),
            tail: Duration::from_secs(20),
            seed,
        }
    }

    fn bin_upper(&self, i: usize) -> Option<usize> {
        self.edges.get(i + 1).copied()
    }
}

/// One simulation of the sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub bin: usize,
    pub protocol: Protocol,
    pub density: usize,
    pub topology_seed: u64,
    pub sim_seed: u64,
    /// Detection delays in seconds over all crashes and correct observers.
    pub delays: Vec<f64>,
    /// Largest number of simultaneous false suspicions.
    pub max_false: usize,
    /// Every correct node ended up suspecting every crashed node.
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub protocol: Protocol,
    pub bin: usize,
    pub upper: Option<usize>,
    pub runs: usize,
    /// Mean measured density of the runs in the bin.
    pub density: Option<f64>,
    pub stats: Option<Summary>,
    pub max_false: usize,
    pub incomplete: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub runs: Vec<SweepRun>,
}

impl SweepReport {
    /// Rows of one protocol that hold at least one run.
    pub fn present(&self, protocol: Protocol) -> impl Iterator<Item = &SweepRow> {
        self.rows
            .iter()
            .filter(move |r| r.protocol == protocol && r.runs > 0 && r.stats.is_some())
    }

    /// Rank correlation between bin density and mean detection time.
    pub fn spearman(&self, protocol: Protocol) -> Option<f64> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .present(protocol)
            .filter_map(|r| Some((r.density?, r.stats.as_ref()?.mean)))
            .unzip();
        metrics::spearman(&xs, &ys)
    }

    /// `protocol,bin,density,runs,mean,max,min,false_suspicions,incomplete`;
    /// bins without runs keep their row with empty statistics.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("protocol,bin,density,runs,mean,max,min,false_suspicions,incomplete\n");
        for r in &self.rows {
            let s = r.stats.as_ref();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.protocol.name(),
                r.bin,
                format_f64(r.density),
                r.runs,
                format_f64(s.map(|s| s.mean)),
                format_f64(s.map(|s| s.max)),
                format_f64(s.map(|s| s.min)),
                r.max_false,
                r.incomplete
            ));
        }
        out
    }
}

/// Topologies for one bin, as `(topology seed, crash seed, sim seed,
/// topology)`, drawn by targeting the bin's lower edge and keeping only
/// graphs whose measured density falls inside the bin.
fn bin_topologies(params: &SweepParams, i: usize) -> Vec<(u64, u64, u64, Topology)> {
    let lower = params.edges[i];
    let upper = params.bin_upper(i);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(lower as u64);
    let gen = GenParams::new(params.region_side, params.radius, params.nodes, params.f).with_target_density(lower);
    let mut picked = Vec::new();
    for _ in 0..params.max_draws {
        if picked.len() == params.runs_per_bin {
            break;
        }
        let (topology_seed, crash_seed, sim_seed): (u64, u64, u64) = (rng.gen(), rng.gen(), rng.gen());
        let Ok(top) = generate_topology(&gen, &mut ChaCha8Rng::seed_from_u64(topology_seed)) else {
            continue;
        };
        let Ok(d) = top.density() else { continue };
        if d >= lower && upper.is_none_or(|u| d < u) {
            picked.push((topology_seed, crash_seed, sim_seed, top));
        }
    }
    picked
}

/// Runs every bin with every protocol on the same topologies and crash
/// schedules.
pub fn run_sweep(params: &SweepParams, protocols: &[Protocol]) -> Result<SweepReport, ExperimentError> {
    let mut report = SweepReport::default();
    let window = (params.warmup, params.sim.duration.saturating_sub(params.tail));
    for i in 0..params.edges.len() {
        let bin = params.edges[i];
        let tops = bin_topologies(params, i);
        let mut bin_runs: Vec<SweepRun> = Vec::new();
        for (topology_seed, crash_seed, sim_seed, top) in &tops {
            let schedule = uniform_crashes(
                top,
                params.crashes,
                window,
                &BTreeSet::new(),
                &mut ChaCha8Rng::seed_from_u64(*crash_seed),
            );
            for &protocol in protocols {
                let cfg = SimConfig {
                    protocol,
                    f: params.f,
                    seed: *sim_seed,
                    ..params.sim.clone()
                };
                let out = run(&cfg, top, &schedule)?;
                let stats = detection_stats(&out.timeline, &out.crashes);
                bin_runs.push(SweepRun {
                    bin,
                    protocol,
                    density: out.density,
                    topology_seed: *topology_seed,
                    sim_seed: *sim_seed,
                    delays: stats.as_ref().map(|s| s.all_delays()).unwrap_or_default(),
                    max_false: false_suspicion_steps(&out.timeline, &out.crashes)
                        .iter()
                        .map(|&(_, c)| c)
                        .max()
                        .unwrap_or(0),
                    complete: stats.is_ok(),
                });
            }
        }
        for &protocol in protocols {
            let runs: Vec<&SweepRun> = bin_runs.iter().filter(|r| r.protocol == protocol).collect();
            let delays: Vec<f64> = runs.iter().flat_map(|r| r.delays.iter().copied()).collect();
            let density =
                (!runs.is_empty()).then(|| runs.iter().map(|r| r.density as f64).sum::<f64>() / runs.len() as f64);
            report.rows.push(SweepRow {
                protocol,
                bin,
                upper: params.bin_upper(i),
                runs: runs.len(),
                density,
                stats: Summary::of(&delays),
                max_false: runs.iter().map(|r| r.max_false).max().unwrap_or(0),
                incomplete: runs.iter().filter(|r| !r.complete).count(),
            });
        }
        report.runs.extend(bin_runs);
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Mobility

/// A single detach/reattach of one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovePlan {
    pub node: NodeId,
    pub from: Point,
    pub destination: Point,
    pub start: Duration,
    pub end: Duration,
}

impl MovePlan {
    pub fn injection(&self) -> Injection {
        Injection::Move {
            node: self.node,
            start: self.start,
            end: self.end,
            destination: self.destination,
        }
    }
}

/// Smallest range in an adjacency list.
fn min_range(adj: &[Vec<usize>]) -> usize {
    adj.iter().map(|n| n.len() + 1).min().unwrap_or(0)
}

/// Looks for a destination for `mover` such that, with the mover detached,
/// the rest of the graph stays `f`-connected with every range of at least
/// `min_range`, and after relocation the whole graph is `f`-covering with
/// the same minimum range. With `distance` set, candidates lie exactly that
/// far from the current position; otherwise anywhere in the region, as long
/// as the mover loses at least one old neighbour.
pub fn find_destination<R: Rng + ?Sized>(
    top: &Topology,
    mover: NodeId,
    f: usize,
    min_range_required: usize,
    distance: Option<f64>,
    tries: usize,
    rng: &mut R,
) -> Option<Point> {
    let from = top.position(mover).ok()?;
    let detached = top.without(&BTreeSet::from([mover]));
    if min_range(&detached) < min_range_required || !is_k_connected(&detached, f) {
        return None;
    }
    let old: BTreeSet<NodeId> = top.neighbors(mover).ok()?.collect();
    let side = top.region_side();
    for _ in 0..tries {
        let candidate = match distance {
            Some(d) => {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                Point::new(from.x + d * angle.cos(), from.y + d * angle.sin())
            }
            None => Point::new(rng.gen_range(0.0..=side), rng.gen_range(0.0..=side)),
        };
        if !(0.0..=side).contains(&candidate.x) || !(0.0..=side).contains(&candidate.y) {
            continue;
        }
        let reach = top
            .nodes()
            .filter(|&n| n != mover && top.position(n).is_ok_and(|p| p.distance(candidate) <= top.radius()))
            .count();
        if reach + 1 < min_range_required {
            continue;
        }
        let mut moved = top.clone();
        moved.relocate(mover, candidate).ok()?;
        let new: BTreeSet<NodeId> = moved.neighbors(mover).ok()?.collect();
        if distance.is_none() && old.is_subset(&new) {
            continue;
        }
        if moved.density().ok()? >= min_range_required && moved.is_f_covering(f) {
            return Some(candidate);
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobilityParams {
    pub nodes: usize,
    pub f: usize,
    /// Exact measured range density required of the network.
    pub density: usize,
    pub radius: f64,
    pub region_side: f64,
    pub mover: MoverRequirement,
    pub distance: f64,
    /// Meters per second.
    pub speed: f64,
    pub start: Duration,
    /// Simulated time kept after the mover reattaches.
    pub tail: Duration,
    pub max_draws: usize,
    /// Template for the runs; protocol, seed, duration and mobility are set
    /// per run.
    pub sim: SimConfig,
}

impl MobilityParams {
    /// 100 nodes, density 7, one crash tolerated, and a mover with 7
    /// neighbours, each of which has at least `d - f + 1` neighbours, that
    /// travels 500 m at 2 m/s from t = 100 s.
    pub fn standard() -> Self {
        let (f, density) = (1, 7);
        Self {
            nodes: 100,
            f,
            density,
            radius: 100.0,
            region_side: 700.0,
            mover: MoverRequirement {
                degree: 7,
                min_neighbor_degree: density - f + 1,
            },
            distance: 500.0,
            speed: 2.0,
            start: Duration::from_secs(100),
            tail: Duration::from_secs(30),
            max_draws: 2000,
            sim: SimConfig::new(Protocol::AsyncFd, f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobilityScenario {
    pub topology: Topology,
    pub topology_seed: u64,
    pub plan: MovePlan,
    pub density: usize,
    pub old_neighbors: Vec<NodeId>,
}

/// Draws topologies until one meets every constraint of `params`.
pub fn build_mobility_scenario(params: &MobilityParams, seed: u64) -> Result<MobilityScenario, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gen =
        GenParams::new(params.region_side, params.radius, params.nodes, params.f).with_target_density(params.density);
    gen.mover = Some(params.mover);
    for _ in 0..params.max_draws {
        let topology_seed: u64 = rng.gen();
        let Ok(top) = generate_topology(&gen, &mut ChaCha8Rng::seed_from_u64(topology_seed)) else {
            continue;
        };
        if top.density() != Ok(params.density) {
            continue;
        }
        let Some(node) = designate_mover(&top, params.mover) else {
            continue;
        };
        let Some(destination) = find_destination(
            &top,
            node,
            params.f,
            params.density,
            Some(params.distance),
            720,
            &mut rng,
        ) else {
            continue;
        };
        let from = top.position(node).expect("designated mover exists");
        let travel = Duration::from_secs_f64(params.distance / params.speed);
        let old_neighbors = top.neighbors(node).expect("designated mover exists").collect();
        return Ok(MobilityScenario {
            topology: top,
            topology_seed,
            plan: MovePlan {
                node,
                from,
                destination,
                start: params.start,
                end: params.start + travel,
            },
            density: params.density,
            old_neighbors,
        });
    }
    Err(GenError::Exhausted(params.max_draws))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MobilityOutcome {
    pub protocol: Protocol,
    pub detach: Duration,
    pub reattach: Duration,
    /// Most nodes suspecting the mover at once while it was away.
    pub peak_suspecting_mover: usize,
    /// Most old neighbours the mover suspected at once after reattaching.
    pub old_neighbors_suspected: usize,
    /// Time from reattachment until the last false suspicion cleared;
    /// `None` when some remained at the end of the run.
    pub clear_after: Option<Duration>,
    /// False-suspicion count after each change.
    pub steps: Vec<(Duration, usize)>,
    /// The mover's protocol state was unchanged across the move.
    pub state_preserved: bool,
}

pub fn run_mobility(
    scenario: &MobilityScenario,
    params: &MobilityParams,
    protocol: Protocol,
    seed: u64,
) -> Result<(RunOutput, MobilityOutcome), SimError> {
    let plan = scenario.plan;
    let cfg = SimConfig {
        protocol,
        f: params.f,
        density: Some(scenario.density),
        seed,
        duration: plan.end + params.tail,
        mobility: protocol == Protocol::AsyncFd,
        ..params.sim.clone()
    };
    let out = run(&cfg, &scenario.topology, &[plan.injection()])?;

    let towards_mover = suspecting_steps(&out.timeline, plan.node, &out.crashes);
    let before = towards_mover
        .iter()
        .take_while(|(t, _)| *t < plan.start)
        .last()
        .map_or(0, |&(_, c)| c);
    let peak = towards_mover
        .iter()
        .filter(|(t, _)| *t >= plan.start && *t < plan.end)
        .map(|&(_, c)| c)
        .chain([before])
        .max()
        .unwrap_or(0);

    let old: BTreeSet<NodeId> = scenario.old_neighbors.iter().copied().collect();
    let mut active: BTreeSet<NodeId> = BTreeSet::new();
    let mut bump = 0;
    let mut records = out.timeline.records.clone();
    records.sort_by_key(|r| r.time);
    for r in records
        .iter()
        .filter(|r| r.observer == plan.node && old.contains(&r.target))
    {
        match r.change {
            Change::Suspect => active.insert(r.target),
            Change::Unsuspect => active.remove(&r.target),
        };
        if r.time >= plan.end {
            bump = bump.max(active.len());
        }
    }

    let steps = false_suspicion_steps(&out.timeline, &out.crashes);
    let clear_after = last_clear_time(&steps).map(|t| t.saturating_sub(plan.end));
    let state_preserved = out.moves.iter().all(|m| m.at_detach == m.at_reattach) && !out.moves.is_empty();
    let outcome = MobilityOutcome {
        protocol,
        detach: plan.start,
        reattach: plan.end,
        peak_suspecting_mover: peak,
        old_neighbors_suspected: bump,
        clear_after,
        steps,
        state_preserved,
    };
    Ok((out, outcome))
}

// ---------------------------------------------------------------------------
// Validation suites

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Completeness,
    Accuracy,
    Mobility,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Completeness => "completeness",
            Suite::Accuracy => "accuracy",
            Suite::Mobility => "mobility",
        }
    }
}

/// When the crash happens relative to the move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrashOrder {
    BeforeMove,
    DuringMove,
    AfterMove,
}

impl CrashOrder {
    pub const ALL: [CrashOrder; 3] = [CrashOrder::BeforeMove, CrashOrder::DuringMove, CrashOrder::AfterMove];

    pub fn name(self) -> &'static str {
        match self {
            CrashOrder::BeforeMove => "before",
            CrashOrder::DuringMove => "during",
            CrashOrder::AfterMove => "after",
        }
    }
}

/// Network shapes cycled through by the static suites, as `(N, f)`.
pub const SUITE_SHAPES: [(usize, usize); 4] = [(8, 1), (8, 2), (20, 1), (20, 2)];

const SUITE_DURATION: Duration = Duration::from_secs(60);
const MOBILITY_SUITE_DURATION: Duration = Duration::from_secs(80);

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub suite: Suite,
    pub seed: u64,
    pub protocol: Protocol,
    pub nodes: usize,
    pub f: usize,
    pub density: usize,
    pub order: Option<CrashOrder>,
    /// Behavioural assumptions that did not hold, e.g. `MP(3)`.
    pub unmet: Vec<String>,
    pub completeness: Option<CompletenessVerdict>,
    pub accuracy: Option<AccuracyVerdict>,
    pub state_preserved: Option<bool>,
}

impl CaseReport {
    pub fn assumptions_hold(&self) -> bool {
        self.unmet.is_empty()
    }

    pub fn properties_hold(&self) -> bool {
        self.completeness.as_ref().is_none_or(CompletenessVerdict::pass)
            && self.accuracy.as_ref().is_none_or(AccuracyVerdict::pass)
            && self.state_preserved.unwrap_or(true)
    }
}

fn verdict_cell(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "pass",
        Some(false) => "fail",
        None => "n/a",
    }
}

/// `suite,seed,protocol,nodes,f,density,order,assumptions,completeness,accuracy,state_preserved,unmet`
pub fn verdict_csv(cases: &[CaseReport]) -> String {
    let mut out = String::from(
        "suite,seed,protocol,nodes,f,density,order,assumptions,completeness,accuracy,state_preserved,unmet\n",
    );
    for c in cases {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            c.suite.name(),
            c.seed,
            c.protocol.name(),
            c.nodes,
            c.f,
            c.density,
            c.order.map_or("n/a", CrashOrder::name),
            verdict_cell(Some(c.assumptions_hold())),
            verdict_cell(c.completeness.as_ref().map(CompletenessVerdict::pass)),
            verdict_cell(c.accuracy.as_ref().map(AccuracyVerdict::pass)),
            verdict_cell(c.state_preserved),
            c.unmet.join(" ")
        ));
    }
    out
}

fn suite_rng(seed: u64, suite: Suite) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(suite as u64 + 1);
    rng
}

fn suite_topology<R: Rng + ?Sized>(nodes: usize, f: usize, rng: &mut R) -> Result<Topology, GenError> {
    let params = GenParams::new(700.0, 100.0, nodes, f);
    let mut last = GenError::Exhausted(0);
    for _ in 0..50 {
        match generate_topology(&params, rng) {
            Ok(top) => return Ok(top),
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn quiet(cfg: &SimConfig) -> Duration {
    cfg.round_delta * 10
}

/// MP for every correct node, plus the extra per-node assumptions listed.
fn unmet_assumptions(out: &RunOutput, f: usize, rp: Option<NodeId>, mover: Option<NodeId>) -> Vec<String> {
    let report = metrics::validate_behavioral(&out.witness, f);
    let crashed: BTreeSet<NodeId> = out.crashes.iter().map(|c| c.node).collect();
    let mut unmet: Vec<String> = report
        .mp
        .iter()
        .filter(|&(n, &ok)| !ok && !crashed.contains(n))
        .map(|(n, _)| format!("MP({n})"))
        .collect();
    if let Some(rp) = rp {
        let table = if mover.is_some() { &report.mobirp } else { &report.rp };
        if !table.get(&rp).copied().unwrap_or(false) {
            unmet.push(format!("{}({rp})", if mover.is_some() { "MobiRP" } else { "RP" }));
        }
    }
    if let Some(m) = mover {
        if !report.mobip.get(&m).copied().unwrap_or(false) {
            unmet.push(format!("MobiP({m})"));
        }
    }
    unmet
}

/// Static network, up to `f` crashes, no assumptions beyond MP.
pub fn completeness_case(seed: u64, protocol: Protocol) -> Result<CaseReport, ExperimentError> {
    let (nodes, f) = SUITE_SHAPES[(seed % SUITE_SHAPES.len() as u64) as usize];
    let mut rng = suite_rng(seed, Suite::Completeness);
    let top = suite_topology(nodes, f, &mut rng)?;
    let cfg = SimConfig {
        seed: rng.gen(),
        duration: SUITE_DURATION,
        ..SimConfig::new(protocol, f)
    };
    let k = rng.gen_range(1..=f);
    let window = (
        Duration::from_secs(2),
        cfg.duration - quiet(&cfg) - Duration::from_secs(5),
    );
    let schedule = uniform_crashes(&top, k, window, &BTreeSet::new(), &mut rng);
    let out = run(&cfg, &top, &schedule)?;
    Ok(CaseReport {
        suite: Suite::Completeness,
        seed,
        protocol,
        nodes,
        f,
        density: out.density,
        order: None,
        unmet: unmet_assumptions(&out, f, None, None),
        completeness: Some(metrics::check_strong_completeness(
            &out.timeline,
            &out.crashes,
            cfg.duration,
            quiet(&cfg),
        )),
        accuracy: None,
        state_preserved: None,
    })
}

/// Static network with a responsive node that never crashes. Accuracy is
/// judged from the end of that node's second round.
pub fn accuracy_case(seed: u64) -> Result<CaseReport, ExperimentError> {
    let (nodes, f) = SUITE_SHAPES[(seed % SUITE_SHAPES.len() as u64) as usize];
    let mut rng = suite_rng(seed, Suite::Accuracy);
    let top = suite_topology(nodes, f, &mut rng)?;
    let rp = NodeId(rng.gen_range(0..nodes as u32));
    let mut cfg = SimConfig {
        seed: rng.gen(),
        duration: SUITE_DURATION,
        ..SimConfig::new(Protocol::AsyncFd, f)
    };
    cfg.rp_node = Some(rp);
    let k = rng.gen_range(0..=f);
    let window = (
        Duration::from_secs(2),
        cfg.duration - quiet(&cfg) - Duration::from_secs(5),
    );
    let schedule = uniform_crashes(&top, k, window, &BTreeSet::from([rp]), &mut rng);
    let out = run(&cfg, &top, &schedule)?;
    let mut unmet = unmet_assumptions(&out, f, Some(rp), None);
    let accuracy = match out.witness.nth_round_end(rp, 2) {
        Some(stable) => {
            Some(metrics::check_eventual_weak_accuracy(&out.timeline, rp, stable, &out.crashes).unwrap_or_default())
        }
        None => {
            unmet.push(format!("rounds({rp})"));
            None
        }
    };
    Ok(CaseReport {
        suite: Suite::Accuracy,
        seed,
        protocol: Protocol::AsyncFd,
        nodes,
        f,
        density: out.density,
        order: None,
        unmet,
        completeness: Some(metrics::check_strong_completeness(
            &out.timeline,
            &out.crashes,
            cfg.duration,
            quiet(&cfg),
        )),
        accuracy,
        state_preserved: None,
    })
}

/// One mover and one crash on a 20-node network tolerating two failures,
/// with a responsive node away from both of the mover's neighbourhoods.
pub fn mobility_case(seed: u64, order: CrashOrder) -> Result<CaseReport, ExperimentError> {
    let (nodes, f) = (20, 2);
    let mut rng = suite_rng(seed, Suite::Mobility);
    let start = Duration::from_secs(20);
    let end = Duration::from_secs(35);
    for _ in 0..50 {
        let top = suite_topology(nodes, f, &mut rng)?;
        let mut order_nodes: Vec<NodeId> = top.nodes().collect();
        order_nodes.shuffle(&mut rng);
        for mover in order_nodes {
            let Some(destination) = find_destination(&top, mover, f, f + 2, None, 200, &mut rng) else {
                continue;
            };
            let mut moved = top.clone();
            moved.relocate(mover, destination)?;
            let near: BTreeSet<NodeId> = top
                .range_set(mover)?
                .into_iter()
                .chain(moved.range_set(mover)?)
                .collect();
            let far: Vec<NodeId> = top.nodes().filter(|n| !near.contains(n)).collect();
            let Some(&rp) = far.choose(&mut rng) else { continue };
            let crash_window = match order {
                CrashOrder::BeforeMove => (Duration::from_secs(5), Duration::from_secs(15)),
                CrashOrder::DuringMove => (Duration::from_secs(22), Duration::from_secs(33)),
                CrashOrder::AfterMove => (Duration::from_secs(40), Duration::from_secs(50)),
            };
            let mut schedule = uniform_crashes(&top, 1, crash_window, &BTreeSet::from([mover, rp]), &mut rng);
            schedule.push(Injection::Move {
                node: mover,
                start,
                end,
                destination,
            });
            let detached = top.without(&BTreeSet::from([mover]));
            let density = top.density()?.min(moved.density()?).min(min_range(&detached));
            let cfg = SimConfig {
                f,
                density: Some(density),
                seed: rng.gen(),
                duration: MOBILITY_SUITE_DURATION,
                mobility: true,
                rp_node: Some(rp),
                ..SimConfig::new(Protocol::AsyncFd, f)
            };
            let out = run(&cfg, &top, &schedule)?;
            let mut unmet = unmet_assumptions(&out, f, Some(rp), Some(mover));
            let accuracy = match out.witness.nth_round_end(rp, 2) {
                Some(stable) => Some(
                    metrics::check_eventual_weak_accuracy(&out.timeline, rp, stable, &out.crashes).unwrap_or_default(),
                ),
                None => {
                    unmet.push(format!("rounds({rp})"));
                    None
                }
            };
            let preserved = !out.moves.is_empty() && out.moves.iter().all(|m| m.at_detach == m.at_reattach);
            debug_assert_eq!(crashes_of(&schedule), out.crashes);
            return Ok(CaseReport {
                suite: Suite::Mobility,
                seed,
                protocol: Protocol::AsyncFd,
                nodes,
                f,
                density,
                order: Some(order),
                unmet,
                completeness: Some(metrics::check_strong_completeness(
                    &out.timeline,
                    &out.crashes,
                    cfg.duration,
                    quiet(&cfg),
                )),
                accuracy,
                state_preserved: Some(preserved),
            });
        }
    }
    Err(GenError::Exhausted(50).into())
}

/// The three suites over `seeds`: completeness under both protocols,
/// accuracy, and mobility with each crash ordering.
pub fn run_suites(suites: &[Suite], seeds: &[u64]) -> Result<Vec<CaseReport>, ExperimentError> {
    let mut cases = Vec::new();
    for &suite in suites {
        for &seed in seeds {
            match suite {
                Suite::Completeness => {
                    for protocol in [Protocol::AsyncFd, Protocol::Heartbeat] {
                        cases.push(completeness_case(seed, protocol)?);
                    }
                }
                Suite::Accuracy => cases.push(accuracy_case(seed)?),
                Suite::Mobility => {
                    for order in CrashOrder::ALL {
                        cases.push(mobility_case(seed, order)?);
                    }
                }
            }
        }
    }
    Ok(cases)
}

// ---------------------------------------------------------------------------
// Single-run assessment

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckKind {
    /// A behavioural property the model assumes (MP, RP, MobiP, MobiRP).
    Assumption,
    /// A property the detector must deliver.
    Property,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub subject: String,
    pub kind: CheckKind,
    /// `None` when the run cannot decide the check.
    pub pass: Option<bool>,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, subject: impl ToString, kind: CheckKind, pass: Option<bool>) -> Self {
        Self {
            name,
            subject: subject.to_string(),
            kind,
            pass,
            detail: String::new(),
        }
    }

    fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Every check that applies to a finished run. Behavioural assumptions need
/// at least two rounds to be meaningful and are left undecided in shorter
/// runs; completeness uses a quiet tail of ten rounds.
pub fn assess_run(out: &RunOutput, cfg: &SimConfig) -> Vec<Check> {
    use CheckKind::{Assumption, Property};
    let mut checks = Vec::new();
    let decidable = out.witness.horizon >= cfg.round_delta * 2;
    let report = metrics::validate_behavioral(&out.witness, cfg.f);
    let crashed: BTreeSet<NodeId> = out.crashes.iter().map(|c| c.node).collect();
    let moved: BTreeSet<NodeId> = out.witness.reattachments.iter().map(|&(_, n)| n).collect();
    let judge = |ok: Option<&bool>| if decidable { ok.copied().or(Some(false)) } else { None };

    for (&node, ok) in &report.mp {
        if !crashed.contains(&node) {
            checks.push(Check::new("MP", node, Assumption, judge(Some(ok))));
        }
    }
    for &node in &moved {
        checks.push(Check::new("MobiP", node, Assumption, judge(report.mobip.get(&node))));
    }
    if let Some(rp) = cfg.rp_node {
        let (name, table) = if moved.is_empty() {
            ("RP", &report.rp)
        } else {
            ("MobiRP", &report.mobirp)
        };
        checks.push(Check::new(name, rp, Assumption, judge(table.get(&rp))));
    }

    if !out.crashes.is_empty() {
        let v = metrics::check_strong_completeness(&out.timeline, &out.crashes, cfg.duration, quiet(cfg));
        let detail = v
            .failures
            .iter()
            .map(|(o, t)| format!("{o}->{t}"))
            .collect::<Vec<_>>()
            .join(" ");
        checks.push(Check::new("completeness", "all", Property, Some(v.pass())).detail(detail));
    }
    if let Some(rp) = cfg.rp_node {
        let check = match out.witness.nth_round_end(rp, 2) {
            _ if crashed.contains(&rp) => Check::new("accuracy", rp, Assumption, Some(false)).detail("rp crashed"),
            None => Check::new("accuracy", rp, Property, None).detail("rp finished fewer than two rounds"),
            Some(stable) => {
                let v =
                    metrics::check_eventual_weak_accuracy(&out.timeline, rp, stable, &out.crashes).unwrap_or_default();
                let offenders = v
                    .offenders
                    .iter()
                    .map(|(o, _)| o.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                Check::new("accuracy", rp, Property, Some(v.pass())).detail(format!(
                    "from {}{}{offenders}",
                    metrics::fmt_time(stable),
                    if offenders.is_empty() { "" } else { " " }
                ))
            }
        };
        checks.push(check);
    }
    for m in &out.moves {
        checks.push(Check::new(
            "state_preserved",
            m.node,
            Property,
            Some(m.at_detach == m.at_reattach),
        ));
    }
    checks
}

/// `check,subject,kind,result,detail`
pub fn checks_csv(checks: &[Check]) -> String {
    let mut out = String::from("check,subject,kind,result,detail\n");
    for c in checks {
        let kind = match c.kind {
            CheckKind::Assumption => "assumption",
            CheckKind::Property => "property",
        };
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.name,
            c.subject,
            kind,
            verdict_cell(c.pass),
            c.detail
        ));
    }
    out
}
