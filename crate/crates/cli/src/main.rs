//! Command-line front end for the failure-detector simulator.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 topology
//! generation failure, 4 a behavioural assumption (MP, RP, MobiP, MobiRP)
//! did not hold, 5 a detector property (completeness, accuracy, state
//! preservation) was violated.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "manet-fd",
    version,
    about = "Timer-free failure detection in mobile ad-hoc networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an f-covering unit-disk topology.
    Generate(GenerateArgs),
    /// Run a scenario file once per seed.
    Run(RunArgs),
    /// Detection time against range density for both detectors.
    SweepDensity(SweepArgs),
    /// The single-mover scenario: false suspicions around a move.
    Mobility(MobilityArgs),
    /// Completeness, accuracy and mobility property suites.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub f: usize,
    #[arg(long, default_value_t = 100.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 700.0)]
    pub region: f64,
    /// Raise the acceptance threshold to aim for this range density.
    #[arg(long)]
    pub density: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Simulation seeds, e.g. `1,2,5..8`; defaults to the scenario's seed.
    #[arg(long, value_parser = parse_seeds)]
    pub seeds: Option<Seeds>,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub f: Option<usize>,
    #[arg(long)]
    pub delay_ms: Option<f64>,
    #[arg(long)]
    pub delta_s: Option<f64>,
    #[arg(long)]
    pub theta_s: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    /// Sampling step of the false-suspicion series.
    #[arg(long, default_value_t = 1.0)]
    pub step_s: f64,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub runs_per_bin: usize,
    /// Lower bin edges; defaults to 7,10,14,18,22,26,30,35,40,45,50.
    #[arg(long, value_delimiter = ',')]
    pub edges: Option<Vec<usize>>,
    #[arg(long, default_value_t = 100)]
    pub nodes: usize,
    #[arg(long, default_value_t = 5)]
    pub f: usize,
    #[arg(long, default_value_t = 5)]
    pub crashes: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delay_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_s: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_s: f64,
    #[arg(long, default_value_t = 1800.0)]
    pub duration_s: f64,
    #[arg(long, value_enum, default_value_t = ProtocolChoice::Both)]
    pub protocol: ProtocolChoice,
}

#[derive(Args, Debug)]
pub struct MobilityArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse_seeds, default_value = "0")]
    pub seeds: Seeds,
    #[arg(long, value_enum, default_value_t = ProtocolChoice::Both)]
    pub protocol: ProtocolChoice,
    #[arg(long, default_value_t = 0.1)]
    pub step_s: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delay_ms: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_s: f64,
    #[arg(long, default_value_t = 2.0)]
    pub theta_s: f64,
    /// Distance travelled in meters.
    #[arg(long, default_value_t = 500.0)]
    pub distance: f64,
    #[arg(long, default_value_t = 2.0)]
    pub speed: f64,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    #[arg(long, value_parser = parse_seeds, default_value = "0..50")]
    pub seeds: Seeds,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Async,
    Heartbeat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolChoice {
    Async,
    Heartbeat,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    All,
    Completeness,
    Accuracy,
    Mobility,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

/// Comma-separated seeds and half-open ranges: `3`, `0..10`, `1,4..6`.
fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let a: u64 = a.parse().map_err(|e| format!("bad range start {a:?}: {e}"))?;
                let b: u64 = b.parse().map_err(|e| format!("bad range end {b:?}: {e}"))?;
                if b <= a {
                    return Err(format!("empty seed range {part}"));
                }
                seeds.extend(a..b);
            }
            None => seeds.push(part.parse().map_err(|e| format!("bad seed {part:?}: {e}"))?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(Seeds(seeds))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(&args),
        Command::Run(args) => commands::run(&args),
        Command::SweepDensity(args) => commands::sweep_density(&args),
        Command::Mobility(args) => commands::mobility(&args),
        Command::Validate(args) => commands::validate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.code())
        }
    }
}
