//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero if any fails. Tolerances are pinned below.

mod common;

use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use manet_fd::experiments::{
    accuracy_case, build_mobility_scenario, completeness_case, mobility_case, run_mobility, run_sweep, CrashOrder,
    MobilityParams, SweepParams, SweepReport,
};
use manet_fd::metrics::{false_suspicion_series, series_csv};
use manet_fd::Protocol;
use proptest::test_runner::{Config, TestRunner};

/// Sweep runs last this long; crashes fall in [10 s, duration - 20 s].
const SWEEP_DURATION: Duration = Duration::from_secs(120);
const SWEEP_SEED: u64 = 1;

const HB_MEAN_RANGE: (f64, f64) = (1.0, 2.0);
const HB_MEAN_TOL: f64 = 0.05;

const ASYNC_SPEARMAN_MAX: f64 = -0.8;
const ASYNC_DENSE_FROM: usize = 22;
const ASYNC_DENSE_TARGET: f64 = 1.001;
const ASYNC_DENSE_TOL: f64 = 0.25;

const MOBILITY_SEEDS: u64 = 10;
const MOVER_SUSPECTERS: usize = 99;
const MOVER_OLD_NEIGHBORS: usize = 7;
const HB_CLEAR_MAX: f64 = 2.5;
const ASYNC_CLEAR_MAX: f64 = 5.0;

const SUITE_SEEDS: u64 = 50;
const CRASH_MOVER_SEEDS: u64 = 5;
const ORACLE_GRAPHS: usize = 500;
const FD_CASES: u32 = 10_000;

struct Line {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: &'static str, pass: bool, detail: impl Into<String>) -> Line {
    Line {
        id,
        pass,
        detail: detail.into(),
    }
}

fn sweep(protocol: Protocol) -> SweepReport {
    let mut params = SweepParams::new(SWEEP_SEED);
    params.sim.duration = SWEEP_DURATION;
    run_sweep(&params, &[protocol]).expect("sweep runs")
}

fn bins(report: &SweepReport, protocol: Protocol) -> String {
    report
        .present(protocol)
        .map(|r| format!("{}:{:.3}", r.bin, r.stats.as_ref().map_or(f64::NAN, |s| s.mean)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn heartbeat_bins(report: &SweepReport, expected_bins: usize) -> Line {
    let rows: Vec<_> = report.present(Protocol::Heartbeat).collect();
    let (lo, hi) = (HB_MEAN_RANGE.0 - HB_MEAN_TOL, HB_MEAN_RANGE.1 + HB_MEAN_TOL);
    let pass = rows.len() == expected_bins
        && rows
            .iter()
            .all(|r| r.runs >= 10 && r.stats.as_ref().is_some_and(|s| (lo..=hi).contains(&s.mean)));
    line(
        "1 heartbeat detection time",
        pass,
        format!(
            "{} bins, means in [{lo}, {hi}]? {}",
            rows.len(),
            bins(report, Protocol::Heartbeat)
        ),
    )
}

fn async_bins(report: &SweepReport, expected_bins: usize) -> Line {
    let rows: Vec<_> = report.present(Protocol::AsyncFd).collect();
    let rho = report.spearman(Protocol::AsyncFd);
    let dense_ok = rows.iter().filter(|r| r.bin >= ASYNC_DENSE_FROM).all(|r| {
        r.stats
            .as_ref()
            .is_some_and(|s| (s.mean - ASYNC_DENSE_TARGET).abs() <= ASYNC_DENSE_TOL)
    });
    let pass = rows.len() == expected_bins && rho.is_some_and(|r| r <= ASYNC_SPEARMAN_MAX) && dense_ok;
    line(
        "2 async detection time",
        pass,
        format!(
            "spearman {} (<= {ASYNC_SPEARMAN_MAX}), bins >= {ASYNC_DENSE_FROM} within {ASYNC_DENSE_TARGET}+-{ASYNC_DENSE_TOL}: {dense_ok}; {}",
            rho.map_or("n/a".into(), |r| format!("{r:.3}")),
            bins(report, Protocol::AsyncFd)
        ),
    )
}

fn no_false_suspicions(reports: &[&SweepReport]) -> Line {
    let runs: Vec<_> = reports.iter().flat_map(|r| r.runs.iter()).collect();
    let per_protocol = |p: Protocol| runs.iter().filter(|r| r.protocol == p).count();
    let worst = runs.iter().map(|r| r.max_false).max().unwrap_or(0);
    let incomplete = runs.iter().filter(|r| !r.complete).count();
    let (a, h) = (per_protocol(Protocol::AsyncFd), per_protocol(Protocol::Heartbeat));
    line(
        "3 no false suspicions without mobility",
        a >= 10 && h >= 10 && worst == 0,
        format!("{a} async and {h} heartbeat crash-only runs, max false suspicions {worst}, undetected crashes in {incomplete}"),
    )
}

fn mobility() -> Vec<Line> {
    let params = MobilityParams::standard();
    let (mut peak, mut clear_hb, mut bump, mut preserved) = (Vec::new(), Vec::new(), Vec::new(), true);
    let mut fails = Vec::new();
    for seed in 0..MOBILITY_SEEDS {
        let scenario = match build_mobility_scenario(&params, seed) {
            Ok(s) => s,
            Err(e) => {
                fails.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        for protocol in [Protocol::AsyncFd, Protocol::Heartbeat] {
            let (_, o) = run_mobility(&scenario, &params, protocol, seed).expect("mobility run");
            preserved &= o.state_preserved;
            peak.push((seed, protocol, o.peak_suspecting_mover));
            let clear = o.clear_after.map(|d| d.as_secs_f64());
            match protocol {
                Protocol::Heartbeat => clear_hb.push((seed, clear)),
                Protocol::AsyncFd => bump.push((seed, scenario.old_neighbors.len(), o.old_neighbors_suspected, clear)),
            }
        }
    }
    let fmt_clear = |c: Option<f64>| c.map_or("never".to_string(), |c| format!("{c:.2}"));
    let suffix = if fails.is_empty() {
        String::new()
    } else {
        format!("; {}", fails.join(", "))
    };
    vec![
        line(
            "4a mover suspected by all others",
            fails.is_empty() && peak.iter().all(|&(_, _, p)| p == MOVER_SUSPECTERS),
            format!(
                "peak suspecters per run (want {MOVER_SUSPECTERS}): {:?}{suffix}",
                peak.iter().map(|p| p.2).collect::<Vec<_>>()
            ),
        ),
        line(
            "4b heartbeat clears after reattach",
            fails.is_empty() && clear_hb.iter().all(|&(_, c)| c.is_some_and(|c| c <= HB_CLEAR_MAX)),
            format!(
                "seconds to clear (<= {HB_CLEAR_MAX}): {}",
                clear_hb
                    .iter()
                    .map(|&(_, c)| fmt_clear(c))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        ),
        line(
            "4c async bump from old neighbours clears",
            fails.is_empty()
                && bump.iter().all(|&(_, old, b, c)| {
                    old == MOVER_OLD_NEIGHBORS && b == old && c.is_some_and(|c| c <= ASYNC_CLEAR_MAX)
                }),
            format!(
                "old neighbours suspected by the mover / seconds to clear (<= {ASYNC_CLEAR_MAX}): {}",
                bump.iter()
                    .map(|&(_, _, b, c)| format!("{b}/{}", fmt_clear(c)))
                    .collect::<Vec<_>>()
                    .join(" ")
            ),
        ),
        line(
            "4d mover state survives the move",
            fails.is_empty() && preserved,
            format!("preserved in every run: {preserved}"),
        ),
    ]
}

fn completeness() -> Line {
    let (mut runs, mut failed, mut unmet) = (0, Vec::new(), 0);
    for seed in 0..SUITE_SEEDS {
        for protocol in [Protocol::AsyncFd, Protocol::Heartbeat] {
            let case = completeness_case(seed, protocol).expect("completeness case");
            runs += 1;
            unmet += usize::from(!case.assumptions_hold());
            if !case.properties_hold() {
                failed.push(format!("{}/{seed}", protocol.name()));
            }
        }
    }
    line(
        "5 strong completeness",
        failed.is_empty(),
        format!("{runs} runs over seeds 0..{SUITE_SEEDS}, quiet tail 10 rounds, violations {failed:?}, runs with unmet assumptions {unmet}"),
    )
}

fn accuracy() -> Line {
    let (mut held, mut failed, mut unmet) = (0, Vec::new(), Vec::new());
    for seed in 0..SUITE_SEEDS {
        let case = accuracy_case(seed).expect("accuracy case");
        if !case.assumptions_hold() {
            unmet.push(format!("{seed}:{}", case.unmet.join("+")));
        } else if case.properties_hold() {
            held += 1;
        } else {
            failed.push(seed);
        }
    }
    line(
        "6 eventual weak accuracy",
        failed.is_empty() && unmet.is_empty(),
        format!("{held}/{SUITE_SEEDS} seeds hold from the responsive node's 2nd round; violations {failed:?}; unmet assumptions {unmet:?}"),
    )
}

fn crash_and_mover() -> Line {
    let (mut cases, mut failed, mut unmet) = (0, Vec::new(), Vec::new());
    for seed in 0..CRASH_MOVER_SEEDS {
        for order in CrashOrder::ALL {
            let case = mobility_case(seed, order).expect("mobility case");
            cases += 1;
            if !case.assumptions_hold() {
                unmet.push(format!("{seed}/{}:{}", order.name(), case.unmet.join("+")));
            }
            if !case.properties_hold() {
                failed.push(format!("{seed}/{}", order.name()));
            }
        }
    }
    line(
        "7 crashes around a move",
        failed.is_empty() && unmet.is_empty(),
        format!(
            "{cases} runs (crash before, during, after), property violations {failed:?}, unmet assumptions {unmet:?}"
        ),
    )
}

fn covering_oracle() -> Line {
    let cmp = common::oracle::compare_geometric(ORACLE_GRAPHS, 0xacce);
    line(
        "8 f-covering against brute force",
        cmp.mismatches.is_empty(),
        format!(
            "{} graphs, {} (graph, f) pairs, {} covering, {} mismatches",
            cmp.graphs,
            cmp.pairs,
            cmp.covering,
            cmp.mismatches.len()
        ),
    )
}

fn fd_invariants() -> Line {
    let mut runner = TestRunner::new(Config {
        cases: FD_CASES,
        failure_persistence: None,
        ..Config::default()
    });
    let sequences = runner.run(&common::fd_model::ops(), common::fd_model::check_sequence);
    let fixture = common::five_nodes::crash_of_a();
    line(
        "9 detector invariants and worked example",
        sequences.is_ok() && fixture.as_expected(),
        format!(
            "{FD_CASES} random sequences: {}; worked example ends with tags {:?}",
            sequences.as_ref().map_or_else(|e| e.to_string(), |_| "ok".into()),
            fixture.final_tags
        ),
    )
}

fn determinism() -> Line {
    let small_sweep = || {
        let mut params = SweepParams::new(3);
        params.edges = vec![14, 18];
        params.runs_per_bin = 2;
        params.sim.duration = Duration::from_secs(45);
        run_sweep(&params, &[Protocol::AsyncFd, Protocol::Heartbeat])
            .expect("sweep")
            .to_csv()
    };
    let mobility_run = || {
        let params = MobilityParams::standard();
        let scenario = build_mobility_scenario(&params, 0).expect("scenario");
        let mut bytes = scenario.topology.to_text();
        for protocol in [Protocol::AsyncFd, Protocol::Heartbeat] {
            let (out, _) = run_mobility(&scenario, &params, protocol, 0).expect("run");
            bytes.push_str(&out.timeline.to_log());
            bytes.push_str(&series_csv(&false_suspicion_series(
                &out.timeline,
                &out.crashes,
                Duration::from_millis(100),
            )));
        }
        bytes
    };
    let (a, b) = (small_sweep(), small_sweep());
    let (c, d) = (mobility_run(), mobility_run());
    line(
        "10 determinism",
        a == b && c == d,
        format!(
            "sweep csv {} bytes identical: {}; mobility logs and series {} bytes identical: {}",
            a.len(),
            a == b,
            c.len(),
            c == d
        ),
    )
}

fn main() -> ExitCode {
    let started = Instant::now();
    let bins = SweepParams::new(SWEEP_SEED).edges.len();
    let lines = thread::scope(|s| {
        let hb = s.spawn(|| sweep(Protocol::Heartbeat));
        let fast = s.spawn(|| sweep(Protocol::AsyncFd));
        let mob = s.spawn(mobility);
        let suites = s.spawn(|| vec![completeness(), accuracy(), crash_and_mover()]);
        let cheap = s.spawn(|| vec![covering_oracle(), fd_invariants(), determinism()]);
        let (hb, fast) = (hb.join().unwrap(), fast.join().unwrap());
        let mut lines = vec![
            heartbeat_bins(&hb, bins),
            async_bins(&fast, bins),
            no_false_suspicions(&[&hb, &fast]),
        ];
        lines.extend(mob.join().unwrap());
        lines.extend(suites.join().unwrap());
        lines.extend(cheap.join().unwrap());
        lines
    });
    for l in &lines {
        println!("{} {}: {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.detail);
    }
    let failed = lines.iter().filter(|l| !l.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed in {:.0?}",
        lines.len() - failed,
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
