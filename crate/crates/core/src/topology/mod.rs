//! Unit-disk network topologies.
//!
//! Nodes live in a square region; two nodes are neighbours when their
//! distance does not exceed the transmission radius. A node's *range* is
//! itself plus its neighbours, and the network's *range density* is the
//! smallest range. A network tolerating `f` crashes must be
//! `(f + 1)`-vertex-connected ("f-covering").

pub mod connectivity;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::fd::NodeId;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("topology has no nodes")]
    Empty,
    #[error("malformed topology text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("invalid generation parameters: {0}")]
    Params(String),
    #[error("gave up after {rejections} consecutive rejected candidates with {placed}/{wanted} nodes placed")]
    RetryBudget {
        rejections: usize,
        placed: usize,
        wanted: usize,
    },
    #[error("generated graph is not {f}-covering (density {density})")]
    NotCovering { f: usize, density: usize },
    #[error("no node satisfies the mover constraints (degree {degree}, neighbour degree >= {min_neighbor_degree})")]
    NoMover { degree: usize, min_neighbor_degree: usize },
    #[error("no topology met the scenario constraints within {0} attempts")]
    Exhausted(usize),
}

// Tolerance on the radius test so that nodes placed exactly `radius` apart
// (opposite points of the seed circle) stay adjacent despite rounding.
const RADIUS_SLACK: f64 = 1e-9;

/// Node positions plus the derived unit-disk adjacency. Node ids are
/// `0..len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    sites: Vec<Point>,
    radius: f64,
    region_side: f64,
    adjacency: Vec<Vec<usize>>,
}

impl Topology {
    pub fn new(sites: Vec<Point>, radius: f64, region_side: f64) -> Self {
        let mut top = Self {
            sites,
            radius,
            region_side,
            adjacency: Vec::new(),
        };
        top.rebuild();
        top
    }

    fn in_range(&self, a: Point, b: Point) -> bool {
        a.distance(b) <= self.radius + RADIUS_SLACK
    }

    fn rebuild(&mut self) {
        let n = self.sites.len();
        self.adjacency = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if self.in_range(self.sites[i], self.sites[j]) {
                    self.adjacency[i].push(j);
                    self.adjacency[j].push(i);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn region_side(&self) -> f64 {
        self.region_side
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.sites.len() as u32).map(NodeId)
    }

    fn check(&self, id: NodeId) -> Result<usize, TopologyError> {
        if id.index() < self.sites.len() {
            Ok(id.index())
        } else {
            Err(TopologyError::UnknownNode(id))
        }
    }

    pub fn position(&self, id: NodeId) -> Result<Point, TopologyError> {
        Ok(self.sites[self.check(id)?])
    }

    /// Neighbours of `id` in ascending order (`id` excluded).
    pub fn neighbors(&self, id: NodeId) -> Result<impl Iterator<Item = NodeId> + '_, TopologyError> {
        let i = self.check(id)?;
        Ok(self.adjacency[i].iter().map(|&j| NodeId(j as u32)))
    }

    pub fn degree(&self, id: NodeId) -> Result<usize, TopologyError> {
        Ok(self.adjacency[self.check(id)?].len())
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        a.index() < self.len() && self.adjacency[a.index()].binary_search(&b.index()).is_ok()
    }

    /// `id` together with its one-hop neighbours.
    pub fn range_set(&self, id: NodeId) -> Result<BTreeSet<NodeId>, TopologyError> {
        let mut set: BTreeSet<NodeId> = self.neighbors(id)?.collect();
        set.insert(id);
        Ok(set)
    }

    /// Size of the smallest range set.
    pub fn density(&self) -> Result<usize, TopologyError> {
        self.adjacency
            .iter()
            .map(|nbrs| nbrs.len() + 1)
            .min()
            .ok_or(TopologyError::Empty)
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    /// Whether the graph survives any `f` node removals, i.e. is
    /// `(f + 1)`-vertex-connected.
    pub fn is_f_covering(&self, f: usize) -> bool {
        connectivity::is_k_connected(&self.adjacency, f + 1)
    }

    /// Moves `id` and recomputes its adjacency.
    pub fn relocate(&mut self, id: NodeId, to: Point) -> Result<(), TopologyError> {
        let i = self.check(id)?;
        for j in std::mem::take(&mut self.adjacency[i]) {
            self.adjacency[j].retain(|&k| k != i);
        }
        self.sites[i] = to;
        for j in 0..self.sites.len() {
            if j != i && self.in_range(to, self.sites[j]) {
                self.adjacency[i].push(j);
                let list = &mut self.adjacency[j];
                let at = list.partition_point(|&k| k < i);
                list.insert(at, i);
            }
        }
        Ok(())
    }

    /// Graph with the listed nodes deleted, as adjacency lists over the
    /// remaining nodes (renumbered in ascending order).
    pub fn without(&self, removed: &BTreeSet<NodeId>) -> Vec<Vec<usize>> {
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| !removed.contains(&NodeId(i as u32)))
            .collect();
        let mut renumber = vec![usize::MAX; self.len()];
        for (new, &old) in keep.iter().enumerate() {
            renumber[old] = new;
        }
        keep.iter()
            .map(|&old| {
                self.adjacency[old]
                    .iter()
                    .filter_map(|&j| (renumber[j] != usize::MAX).then_some(renumber[j]))
                    .collect()
            })
            .collect()
    }

    /// Plain-text form: a header `N radius regionSide`, then `id x y` per node.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.len(), self.radius, self.region_side);
        for (i, p) in self.sites.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", i, p.x, p.y);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TopologyError> {
        let err = |line: usize, reason: &str| TopologyError::Parse {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [n, radius, side] = fields.as_slice() else {
            return Err(err(hline + 1, "header must be `N radius regionSide`"));
        };
        let n: usize = n.parse().map_err(|_| err(hline + 1, "bad node count"))?;
        let radius: f64 = radius.parse().map_err(|_| err(hline + 1, "bad radius"))?;
        let side: f64 = side.parse().map_err(|_| err(hline + 1, "bad region side"))?;
        let mut sites = Vec::with_capacity(n);
        for (idx, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [id, x, y] = fields.as_slice() else {
                return Err(err(idx + 1, "node line must be `id x y`"));
            };
            let id: usize = id.parse().map_err(|_| err(idx + 1, "bad node id"))?;
            if id != sites.len() {
                return Err(err(idx + 1, "node ids must be 0..N in order"));
            }
            let x: f64 = x.parse().map_err(|_| err(idx + 1, "bad x"))?;
            let y: f64 = y.parse().map_err(|_| err(idx + 1, "bad y"))?;
            sites.push(Point::new(x, y));
        }
        if sites.len() != n {
            return Err(err(hline + 1, "node count does not match header"));
        }
        Ok(Self::new(sites, radius, side))
    }
}

/// Extra constraint used by the mobility experiment: some node (the future
/// mover) has exactly `degree` neighbours, each of which has at least
/// `min_neighbor_degree` neighbours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MoverRequirement {
    pub degree: usize,
    pub min_neighbor_degree: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub region_side: f64,
    pub radius: f64,
    pub nodes: usize,
    pub f: usize,
    /// Neighbours a candidate needs to be accepted; at least `f + 1`.
    pub min_neighbors: usize,
    /// Size of the initial clique; at least `f + 2`.
    pub seed_clique: usize,
    pub mover: Option<MoverRequirement>,
    pub max_rejections: usize,
}

impl GenParams {
    pub fn new(region_side: f64, radius: f64, nodes: usize, f: usize) -> Self {
        Self {
            region_side,
            radius,
            nodes,
            f,
            min_neighbors: f + 1,
            seed_clique: f + 2,
            mover: None,
            max_rejections: 10_000,
        }
    }

    /// Raises the acceptance threshold so that the range density is at least
    /// `density`.
    pub fn with_target_density(mut self, density: usize) -> Self {
        self.min_neighbors = self.min_neighbors.max(density.saturating_sub(1));
        self.seed_clique = self.seed_clique.max(density);
        self
    }
}

/// Builds an f-covering topology incrementally: a seed clique on a circle of
/// radius `r/2`, then uniformly drawn candidates that are kept only if they
/// already have `min_neighbors` neighbours.
pub fn generate_topology<R: Rng + ?Sized>(params: &GenParams, rng: &mut R) -> Result<Topology, GenError> {
    let GenParams {
        region_side,
        radius,
        nodes,
        f,
        ..
    } = *params;
    if !(radius > 0.0 && radius <= region_side) {
        return Err(GenError::Params(format!(
            "radius {radius} must be in (0, {region_side}]"
        )));
    }
    if params.min_neighbors < f + 1 || params.seed_clique < f + 2 {
        return Err(GenError::Params(
            "seed clique and acceptance threshold too small for f".into(),
        ));
    }
    if nodes < params.seed_clique {
        return Err(GenError::Params(format!(
            "{nodes} nodes cannot hold a seed clique of {}",
            params.seed_clique
        )));
    }

    let half = radius / 2.0;
    let center = Point::new(
        rng.gen_range(half..=region_side - half),
        rng.gen_range(half..=region_side - half),
    );
    let mut sites: Vec<Point> = (0..params.seed_clique)
        .map(|k| {
            let angle = std::f64::consts::TAU * k as f64 / params.seed_clique as f64;
            Point::new(center.x + half * angle.cos(), center.y + half * angle.sin())
        })
        .collect();

    let mut rejections = 0;
    while sites.len() < nodes {
        let candidate = Point::new(rng.gen_range(0.0..=region_side), rng.gen_range(0.0..=region_side));
        let neighbors = sites
            .iter()
            .filter(|&&p| p.distance(candidate) <= radius + RADIUS_SLACK)
            .count();
        if neighbors >= params.min_neighbors {
            sites.push(candidate);
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= params.max_rejections {
                return Err(GenError::RetryBudget {
                    rejections,
                    placed: sites.len(),
                    wanted: nodes,
                });
            }
        }
    }

    let top = Topology::new(sites, radius, region_side);
    // cheap checks first: the connectivity test dominates the cost
    if let Some(req) = params.mover {
        if designate_mover(&top, req).is_none() {
            return Err(GenError::NoMover {
                degree: req.degree,
                min_neighbor_degree: req.min_neighbor_degree,
            });
        }
    }
    let density = top.density().unwrap_or(0);
    if density <= f + 1 || !top.is_f_covering(f) {
        return Err(GenError::NotCovering { f, density });
    }
    Ok(top)
}

/// [`generate_topology`] driven by a ChaCha generator seeded with `seed`.
pub fn generate_seeded(params: &GenParams, seed: u64) -> Result<Topology, GenError> {
    generate_topology(params, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
}

/// Picks the node closest to the region boundary among those satisfying
/// `req`. Ties go to the lowest id.
pub fn designate_mover(top: &Topology, req: MoverRequirement) -> Option<NodeId> {
    let side = top.region_side();
    let border_gap = |p: Point| p.x.min(p.y).min(side - p.x).min(side - p.y);
    top.nodes()
        .filter(|&id| {
            let nbrs = &top.adjacency[id.index()];
            nbrs.len() == req.degree && nbrs.iter().all(|&j| top.adjacency[j].len() >= req.min_neighbor_degree)
        })
        .min_by(|&a, &b| {
            let ga = border_gap(top.sites[a.index()]);
            let gb = border_gap(top.sites[b.index()]);
            ga.total_cmp(&gb).then(a.cmp(&b))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[u32]) -> BTreeSet<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn range_sets() {
        let lone = Topology::new(vec![Point::new(0.0, 0.0), Point::new(500.0, 0.0)], 100.0, 700.0);
        assert_eq!(lone.range_set(NodeId(0)).unwrap(), ids(&[0]));
        assert_eq!(lone.range_set(NodeId(5)), Err(TopologyError::UnknownNode(NodeId(5))));

        let tri = Topology::new(
            vec![Point::new(0.0, 0.0), Point::new(50.0, 0.0), Point::new(25.0, 40.0)],
            100.0,
            700.0,
        );
        for id in tri.nodes() {
            assert_eq!(tri.range_set(id).unwrap().len(), 3);
        }
        assert_eq!(tri.density(), Ok(3));
    }

    #[test]
    fn star_density() {
        // centre at origin, leaves 90m away in three directions, leaves >100m apart
        let top = Topology::new(
            vec![
                Point::new(200.0, 200.0),
                Point::new(290.0, 200.0),
                Point::new(110.0, 200.0),
                Point::new(200.0, 290.0),
            ],
            100.0,
            700.0,
        );
        assert_eq!(top.degree(NodeId(0)), Ok(3));
        assert_eq!(top.density(), Ok(2));
        assert_eq!(
            Topology::new(Vec::new(), 100.0, 700.0).density(),
            Err(TopologyError::Empty)
        );
    }

    #[test]
    fn path_is_not_one_covering() {
        let path = Topology::new(
            vec![Point::new(0.0, 0.0), Point::new(90.0, 0.0), Point::new(180.0, 0.0)],
            100.0,
            700.0,
        );
        assert!(path.is_f_covering(0));
        assert!(!path.is_f_covering(1));
    }

    #[test]
    fn relocate_updates_both_sides() {
        let mut top = Topology::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(90.0, 0.0),
                Point::new(400.0, 0.0),
                Point::new(480.0, 0.0),
            ],
            100.0,
            700.0,
        );
        top.relocate(NodeId(1), Point::new(440.0, 10.0)).unwrap();
        assert_eq!(top.range_set(NodeId(1)).unwrap(), ids(&[1, 2, 3]));
        assert_eq!(top.range_set(NodeId(0)).unwrap(), ids(&[0]));
        assert_eq!(top.range_set(NodeId(3)).unwrap(), ids(&[1, 2, 3]));
        assert_eq!(top, Topology::new(top.sites.clone(), 100.0, 700.0));
    }

    #[test]
    fn seed_clique_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in 0..6 {
            let top = generate_topology(&GenParams::new(700.0, 100.0, f + 2, f), &mut rng).unwrap();
            assert_eq!(top.len(), f + 2);
            assert!(top.is_f_covering(f));
            assert_eq!(top.density(), Ok(f + 2));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let params = GenParams::new(700.0, 100.0, 40, 2);
        let a = generate_topology(&params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = generate_topology(&params, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn generation_rejects_bad_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            generate_topology(&GenParams::new(700.0, 100.0, 3, 2), &mut rng),
            Err(GenError::Params(_))
        ));
        assert!(matches!(
            generate_topology(&GenParams::new(50.0, 100.0, 9, 2), &mut rng),
            Err(GenError::Params(_))
        ));
        let mut params = GenParams::new(700.0, 100.0, 30, 1);
        params.min_neighbors = 25;
        params.max_rejections = 50;
        assert!(matches!(
            generate_topology(&params, &mut rng),
            Err(GenError::RetryBudget { .. })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let top = generate_topology(&GenParams::new(700.0, 100.0, 30, 1), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let text = top.to_text();
        let back = Topology::from_text(&text).unwrap();
        assert_eq!(back, top);
        assert_eq!(back.to_text(), text);
        assert!(Topology::from_text("2 100 700\n0 1 1\n").is_err());
        assert!(Topology::from_text("1 100 700\n3 1 1\n").is_err());
    }

    #[test]
    fn mover_designation() {
        let mut params = GenParams::new(700.0, 100.0, 100, 1).with_target_density(7);
        params.mover = Some(MoverRequirement {
            degree: 7,
            min_neighbor_degree: 7,
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let top = loop {
            if let Ok(top) = generate_topology(&params, &mut rng) {
                break top;
            }
        };
        let m = designate_mover(&top, params.mover.unwrap()).unwrap();
        assert_eq!(top.degree(m), Ok(7));
        for n in top.neighbors(m).unwrap() {
            assert!(top.degree(n).unwrap() >= 7);
        }
    }
}
