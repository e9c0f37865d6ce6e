use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Duration;

use manet_fd::experiments::{
    self, assess_run, build_mobility_scenario, checks_csv, run_mobility, run_sweep, verdict_csv, CheckKind,
    ExperimentError, MobilityParams, Suite, SweepParams,
};
use manet_fd::metrics::{self, detection_csv, false_suspicion_series, fmt_time, series_csv};
use manet_fd::scenario::{ProtocolName, Scenario, ScenarioError};
use manet_fd::topology::generate_seeded;
use manet_fd::{GenParams, Protocol, SimConfig, SimError};
use thiserror::Error;

use crate::{GenerateArgs, MobilityArgs, ProtocolArg, ProtocolChoice, RunArgs, SuiteArg, SweepArgs, ValidateArgs};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Generation(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("property violated: {0}")]
    Property(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Config(_) => 2,
            Failure::Generation(_) => 3,
            Failure::Assumption(_) => 4,
            Failure::Property(_) => 5,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Io { .. } => Failure::Io(e.to_string()),
            ScenarioError::Gen(_) => Failure::Generation(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Gen(_) => Failure::Generation(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

fn seconds(what: &str, v: f64) -> Result<Duration, Failure> {
    Duration::try_from_secs_f64(v).map_err(|_| Failure::Config(format!("--{what} must be a non-negative number")))
}

fn protocols(choice: ProtocolChoice) -> Vec<Protocol> {
    match choice {
        ProtocolChoice::Async => vec![Protocol::AsyncFd],
        ProtocolChoice::Heartbeat => vec![Protocol::Heartbeat],
        ProtocolChoice::Both => vec![Protocol::AsyncFd, Protocol::Heartbeat],
    }
}

/// Template configuration from the shared timing flags.
fn timing(delay_ms: f64, delta_s: f64, theta_s: f64) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::new(Protocol::AsyncFd, 0);
    cfg.delay_mean = seconds("delay-ms", delay_ms / 1000.0)?;
    cfg.round_delta = seconds("delta-s", delta_s)?;
    cfg.theta = seconds("theta-s", theta_s)?;
    if cfg.delay_mean.is_zero() || cfg.round_delta.is_zero() || cfg.theta <= cfg.round_delta {
        return Err(Failure::Config(
            "delays must be positive and theta must exceed delta".into(),
        ));
    }
    Ok(cfg)
}

pub fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let mut params = GenParams::new(args.region, args.radius, args.nodes, args.f);
    if let Some(d) = args.density {
        params = params.with_target_density(d);
    }
    let top = generate_seeded(&params, args.seed).map_err(|e| Failure::Generation(e.to_string()))?;
    write(&args.out, &top.to_text())?;
    println!("nodes: {}", top.len());
    println!(
        "density: {}",
        top.density().map_err(|e| Failure::Generation(e.to_string()))?
    );
    println!("f-covering: {}", top.is_f_covering(args.f));
    Ok(())
}

pub fn run(args: &RunArgs) -> Result<(), Failure> {
    let mut scenario = Scenario::load(&args.scenario)?;
    if let Some(n) = args.nodes {
        if scenario.topology.is_some() {
            return Err(Failure::Config("--nodes only applies to generated topologies".into()));
        }
        scenario.nodes = n;
    }
    if let Some(f) = args.f {
        scenario.f = f;
    }
    if let Some(v) = args.delay_ms {
        scenario.delay_ms = v;
    }
    if let Some(v) = args.delta_s {
        scenario.delta_s = v;
    }
    if let Some(v) = args.theta_s {
        scenario.theta_s = v;
    }
    if let Some(v) = args.duration_s {
        scenario.duration_s = v;
    }
    if let Some(p) = args.protocol {
        scenario.protocol = match p {
            ProtocolArg::Async => ProtocolName::Async,
            ProtocolArg::Heartbeat => ProtocolName::Heartbeat,
        };
    }
    let step = seconds("step-s", args.step_s)?;
    if step.is_zero() {
        return Err(Failure::Config("--step-s must be positive".into()));
    }
    let top = scenario.build_topology()?;
    let base = scenario.sim_config()?;
    let schedule = scenario.schedule(&top)?;
    let seeds = args.seeds.as_ref().map_or_else(|| vec![scenario.seed], |s| s.0.clone());

    let (mut unmet, mut violated) = (Vec::new(), Vec::new());
    for seed in seeds {
        let cfg = SimConfig { seed, ..base.clone() };
        let out = manet_fd::run(&cfg, &top, &schedule)?;
        let stem = format!("{}-seed{seed}", cfg.protocol.name());
        write(&args.out.join(format!("{stem}.log")), &out.timeline.to_log())?;
        let detection = match metrics::detection_stats(&out.timeline, &out.crashes) {
            Ok(stats) => detection_csv(&stats),
            Err(_) => "crash,time,observers,mean,max,min\n".to_string(),
        };
        write(&args.out.join(format!("{stem}.detection.csv")), &detection)?;
        let series = false_suspicion_series(&out.timeline, &out.crashes, step);
        write(&args.out.join(format!("{stem}.series.csv")), &series_csv(&series))?;
        let checks = assess_run(&out, &cfg);
        write(&args.out.join(format!("{stem}.verdicts.csv")), &checks_csv(&checks))?;

        let failed = |kind: CheckKind| {
            checks
                .iter()
                .filter(move |c| c.kind == kind && c.pass == Some(false))
                .map(move |c| format!("seed {seed}: {}({})", c.name, c.subject))
        };
        unmet.extend(failed(CheckKind::Assumption));
        violated.extend(failed(CheckKind::Property));
        println!(
            "{stem}: {} events, {} suspicion records, max false suspicions {}",
            out.stats.events,
            out.timeline.records.len(),
            series.iter().map(|&(_, c)| c).max().unwrap_or(0)
        );
    }
    if !unmet.is_empty() {
        return Err(Failure::Assumption(unmet.join(", ")));
    }
    if !violated.is_empty() {
        return Err(Failure::Property(violated.join(", ")));
    }
    Ok(())
}

pub fn sweep_density(args: &SweepArgs) -> Result<(), Failure> {
    let mut params = SweepParams::new(args.seed);
    params.nodes = args.nodes;
    params.f = args.f;
    params.runs_per_bin = args.runs_per_bin;
    params.crashes = args.crashes;
    if let Some(edges) = &args.edges {
        if edges.is_empty() || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Failure::Config("--edges must be strictly ascending".into()));
        }
        params.edges = edges.clone();
    }
    params.sim = SimConfig {
        duration: seconds("duration-s", args.duration_s)?,
        ..timing(args.delay_ms, args.delta_s, args.theta_s)?
    };
    if params.sim.duration <= params.warmup + params.tail {
        return Err(Failure::Config(format!(
            "--duration-s must exceed {}s to leave room for crashes",
            (params.warmup + params.tail).as_secs()
        )));
    }
    let chosen = protocols(args.protocol);
    let report = run_sweep(&params, &chosen)?;
    write(&args.out.join("sweep.csv"), &report.to_csv())?;
    for &p in &chosen {
        let rho = report.spearman(p).map_or("n/a".to_string(), |r| format!("{r:.3}"));
        println!("{}: {} bins, spearman {rho}", p.name(), report.present(p).count());
    }
    let incomplete: usize = report.rows.iter().map(|r| r.incomplete).sum();
    if incomplete > 0 {
        return Err(Failure::Property(format!("{incomplete} runs left a crash undetected")));
    }
    Ok(())
}

pub fn mobility(args: &MobilityArgs) -> Result<(), Failure> {
    let mut params = MobilityParams::standard();
    params.sim = timing(args.delay_ms, args.delta_s, args.theta_s)?;
    if !(args.distance > 0.0 && args.speed > 0.0) {
        return Err(Failure::Config("--distance and --speed must be positive".into()));
    }
    params.distance = args.distance;
    params.speed = args.speed;
    let step = seconds("step-s", args.step_s)?;
    if step.is_zero() {
        return Err(Failure::Config("--step-s must be positive".into()));
    }

    let mut summary = String::from(
        "protocol,seed,mover,detach,reattach,peak_suspecting_mover,old_neighbors_suspected,clear_after,state_preserved\n",
    );
    let mut violated = Vec::new();
    for &seed in &args.seeds.0 {
        let scenario = build_mobility_scenario(&params, seed).map_err(|e| Failure::Generation(e.to_string()))?;
        write(
            &args.out.join(format!("mobility-seed{seed}.topology.txt")),
            &scenario.topology.to_text(),
        )?;
        for p in protocols(args.protocol) {
            let (out, outcome) = run_mobility(&scenario, &params, p, seed)?;
            let stem = format!("mobility-{}-seed{seed}", p.name());
            write(&args.out.join(format!("{stem}.log")), &out.timeline.to_log())?;
            let series = false_suspicion_series(&out.timeline, &out.crashes, step);
            write(&args.out.join(format!("{stem}.series.csv")), &series_csv(&series))?;
            let clear = outcome
                .clear_after
                .map(|d| format!("{:.6}", d.as_secs_f64()))
                .unwrap_or_default();
            let _ = writeln!(
                summary,
                "{},{seed},{},{},{},{},{},{clear},{}",
                p.name(),
                scenario.plan.node,
                fmt_time(outcome.detach),
                fmt_time(outcome.reattach),
                outcome.peak_suspecting_mover,
                outcome.old_neighbors_suspected,
                outcome.state_preserved
            );
            println!(
                "{stem}: mover {} suspected by {} nodes, cleared {}s after reattach",
                scenario.plan.node,
                outcome.peak_suspecting_mover,
                if clear.is_empty() { "never".into() } else { clear }
            );
            if !outcome.state_preserved {
                violated.push(format!("{stem}: mover state changed while detached"));
            }
            if outcome.clear_after.is_none() {
                violated.push(format!("{stem}: false suspicions remain at the end"));
            }
        }
    }
    write(&args.out.join("mobility.csv"), &summary)?;
    if !violated.is_empty() {
        return Err(Failure::Property(violated.join(", ")));
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let suites: &[Suite] = match args.suite {
        SuiteArg::All => &[Suite::Completeness, Suite::Accuracy, Suite::Mobility],
        SuiteArg::Completeness => &[Suite::Completeness],
        SuiteArg::Accuracy => &[Suite::Accuracy],
        SuiteArg::Mobility => &[Suite::Mobility],
    };
    let cases = experiments::run_suites(suites, &args.seeds.0)?;
    write(&args.out.join("verdicts.csv"), &verdict_csv(&cases))?;
    let unmet: Vec<String> = cases
        .iter()
        .filter(|c| !c.assumptions_hold())
        .map(|c| format!("{} seed {}", c.suite.name(), c.seed))
        .collect();
    let violated: Vec<String> = cases
        .iter()
        .filter(|c| !c.properties_hold())
        .map(|c| format!("{} seed {}", c.suite.name(), c.seed))
        .collect();
    println!(
        "{} cases, {} with unmet assumptions, {} with violated properties",
        cases.len(),
        unmet.len(),
        violated.len()
    );
    if !unmet.is_empty() {
        return Err(Failure::Assumption(unmet.join(", ")));
    }
    if !violated.is_empty() {
        return Err(Failure::Property(violated.join(", ")));
    }
    Ok(())
}
