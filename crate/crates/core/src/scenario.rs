//! Scenario files: flat TOML documents describing a single run.
//!
//! ```toml
//! topology = "net.txt"      # plain-text topology, relative to this file
//! # or, without `topology`, generation parameters:
//! nodes = 100
//! radius = 100.0
//! region = 700.0
//! target_density = 7        # optional
//! topology_seed = 1
//!
//! protocol = "async"        # "async" or "heartbeat"
//! f = 5
//! delay_ms = 1.0            # mean one-hop delay
//! delta_s = 1.0             # harvest window / heartbeat period
//! theta_s = 2.0             # heartbeat timeout
//! seed = 0
//! duration_s = 1800.0
//! mobility = false          # known-set pruning on relayed mistakes
//! rp_node = 3               # optional
//! crashes = [{ node = 4, at_s = 120.0 }]
//! moves = [{ node = 9, start_s = 100.0, speed = 2.0, x = 350.0, y = 20.0 }]
//! ```
//!
//! Every key is optional and unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::fd::NodeId;
use crate::sim::{Injection, Protocol, SimConfig};
use crate::topology::{generate_seeded, GenError, GenParams, Point, Topology, TopologyError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Gen(#[from] GenError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    #[default]
    Async,
    Heartbeat,
}

impl From<ProtocolName> for Protocol {
    fn from(p: ProtocolName) -> Self {
        match p {
            ProtocolName::Async => Protocol::AsyncFd,
            ProtocolName::Heartbeat => Protocol::Heartbeat,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashEntry {
    pub node: u32,
    pub at_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveEntry {
    pub node: u32,
    pub start_s: f64,
    /// Meters per second.
    pub speed: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub topology: Option<PathBuf>,
    pub nodes: usize,
    pub radius: f64,
    pub region: f64,
    pub target_density: Option<usize>,
    pub topology_seed: u64,
    pub protocol: ProtocolName,
    pub f: usize,
    pub delay_ms: f64,
    pub delta_s: f64,
    pub theta_s: f64,
    pub seed: u64,
    pub duration_s: f64,
    pub mobility: bool,
    pub rp_node: Option<u32>,
    pub crashes: Vec<CrashEntry>,
    pub moves: Vec<MoveEntry>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            topology: None,
            nodes: 100,
            radius: 100.0,
            region: 700.0,
            target_density: None,
            topology_seed: 0,
            protocol: ProtocolName::Async,
            f: 5,
            delay_ms: 1.0,
            delta_s: 1.0,
            theta_s: 2.0,
            seed: 0,
            duration_s: 1800.0,
            mobility: false,
            rp_node: None,
            crashes: Vec::new(),
            moves: Vec::new(),
        }
    }
}

fn seconds(what: &str, v: f64) -> Result<Duration, ScenarioError> {
    Duration::try_from_secs_f64(v)
        .map_err(|_| ScenarioError::Invalid(format!("{what} must be a non-negative time, got {v}")))
}

fn positive(what: &str, v: f64) -> Result<Duration, ScenarioError> {
    let d = seconds(what, v)?;
    if d.is_zero() {
        return Err(ScenarioError::Invalid(format!("{what} must be positive")));
    }
    Ok(d)
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Reads a scenario file; a relative `topology` path is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.into(),
            source,
        })?;
        let mut scenario = Self::parse(&text)?;
        if let Some(top) = &scenario.topology {
            if top.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                scenario.topology = Some(base.join(top));
            }
        }
        Ok(scenario)
    }

    pub fn gen_params(&self) -> GenParams {
        let params = GenParams::new(self.region, self.radius, self.nodes, self.f);
        match self.target_density {
            Some(d) => params.with_target_density(d),
            None => params,
        }
    }

    /// Loads the referenced topology file or generates one.
    pub fn build_topology(&self) -> Result<Topology, ScenarioError> {
        match &self.topology {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
                    path: path.clone(),
                    source,
                })?;
                Ok(Topology::from_text(&text)?)
            }
            None => Ok(generate_seeded(&self.gen_params(), self.topology_seed)?),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, ScenarioError> {
        Ok(SimConfig {
            protocol: self.protocol.into(),
            f: self.f,
            density: None,
            delay_mean: positive("delay_ms", self.delay_ms / 1000.0)?,
            round_delta: positive("delta_s", self.delta_s)?,
            theta: positive("theta_s", self.theta_s)?,
            seed: self.seed,
            duration: seconds("duration_s", self.duration_s)?,
            mobility: self.mobility,
            rp_node: self.rp_node.map(NodeId),
        })
    }

    /// Crashes and moves as simulator injections. Moves of one node chain:
    /// each starts from the previous destination.
    pub fn schedule(&self, top: &Topology) -> Result<Vec<Injection>, ScenarioError> {
        let mut out = Vec::new();
        for c in &self.crashes {
            out.push(Injection::Crash {
                node: NodeId(c.node),
                at: seconds("crash time", c.at_s)?,
            });
        }
        let mut moves = self.moves.clone();
        moves.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let mut at: BTreeMap<u32, Point> = BTreeMap::new();
        for m in &moves {
            if !(m.speed > 0.0) {
                return Err(ScenarioError::Invalid(format!(
                    "move of node {} needs a positive speed",
                    m.node
                )));
            }
            let from = match at.get(&m.node) {
                Some(&p) => p,
                None => top.position(NodeId(m.node))?,
            };
            let to = Point::new(m.x, m.y);
            out.push(Injection::move_at_speed(
                NodeId(m.node),
                seconds("move start", m.start_s)?,
                m.speed,
                from,
                to,
            ));
            at.insert(m.node, to);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_standard_setup() {
        let s = Scenario::parse("").unwrap();
        let cfg = s.sim_config().unwrap();
        assert_eq!(cfg.protocol, Protocol::AsyncFd);
        assert_eq!(cfg.f, 5);
        assert_eq!(cfg.delay_mean, Duration::from_millis(1));
        assert_eq!(cfg.round_delta, Duration::from_secs(1));
        assert_eq!(cfg.theta, Duration::from_secs(2));
        assert_eq!(cfg.duration, Duration::from_secs(1800));
        assert_eq!((s.nodes, s.radius, s.region), (100, 100.0, 700.0));
    }

    #[test]
    fn full_document() {
        let text = r#"
            nodes = 12
            f = 1
            protocol = "heartbeat"
            theta_s = 3.0
            duration_s = 60
            rp_node = 2
            crashes = [{ node = 4, at_s = 12.5 }]
            moves = [
                { node = 1, start_s = 30.0, speed = 2.0, x = 10.0, y = 0.0 },
                { node = 1, start_s = 10.0, speed = 1.0, x = 0.0, y = 0.0 },
            ]
        "#;
        let s = Scenario::parse(text).unwrap();
        let cfg = s.sim_config().unwrap();
        assert_eq!(cfg.protocol, Protocol::Heartbeat);
        assert_eq!(cfg.theta, Duration::from_secs(3));
        assert_eq!(cfg.rp_node, Some(NodeId(2)));

        let top = Topology::new((0..12).map(|i| Point::new(3.0 * i as f64, 0.0)).collect(), 100.0, 100.0);
        let schedule = s.schedule(&top).unwrap();
        assert_eq!(
            schedule[0],
            Injection::Crash {
                node: NodeId(4),
                at: Duration::from_secs_f64(12.5)
            }
        );
        // node 1 starts at x = 3, goes to the origin, then on to x = 10
        assert_eq!(
            schedule[1],
            Injection::Move {
                node: NodeId(1),
                start: Duration::from_secs(10),
                end: Duration::from_secs(13),
                destination: Point::new(0.0, 0.0)
            }
        );
        assert_eq!(
            schedule[2],
            Injection::Move {
                node: NodeId(1),
                start: Duration::from_secs(30),
                end: Duration::from_secs(35),
                destination: Point::new(10.0, 0.0)
            }
        );
    }

    #[test]
    fn unknown_keys_fail() {
        assert!(matches!(Scenario::parse("nodez = 3"), Err(ScenarioError::Parse(_))));
        assert!(matches!(
            Scenario::parse("crashes = [{ node = 1, at = 2.0 }]"),
            Err(ScenarioError::Parse(_))
        ));
        assert!(matches!(
            Scenario::parse("protocol = \"phi\""),
            Err(ScenarioError::Parse(_))
        ));
        assert!(matches!(Scenario::parse("f = -1"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn bad_values_fail() {
        let s = Scenario::parse("delta_s = 0.0").unwrap();
        assert!(matches!(s.sim_config(), Err(ScenarioError::Invalid(_))));
        let s = Scenario::parse("duration_s = -1.0").unwrap();
        assert!(matches!(s.sim_config(), Err(ScenarioError::Invalid(_))));
        let s = Scenario::parse("moves = [{ node = 0, start_s = 1.0, speed = 0.0, x = 1.0, y = 1.0 }]").unwrap();
        let top = Topology::new(vec![Point::new(0.0, 0.0)], 1.0, 10.0);
        assert!(matches!(s.schedule(&top), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn generated_topology_is_seeded() {
        let s = Scenario::parse("nodes = 15\nf = 1\ntopology_seed = 4").unwrap();
        let a = s.build_topology().unwrap();
        let b = s.build_topology().unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.len(), 15);
        assert!(a.is_f_covering(1));
    }

    #[test]
    fn topology_path_is_relative_to_file() {
        let dir = std::env::temp_dir().join(format!("manet-fd-scenario-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let top = Topology::new((0..4).map(|i| Point::new(i as f64, 0.0)).collect(), 10.0, 10.0);
        std::fs::write(dir.join("net.txt"), top.to_text()).unwrap();
        std::fs::write(dir.join("run.toml"), "topology = \"net.txt\"\nf = 1\n").unwrap();
        let s = Scenario::load(&dir.join("run.toml")).unwrap();
        assert_eq!(s.build_topology().unwrap().to_text(), top.to_text());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
