//! `is_f_covering` against brute force: remove every subset of at most `f`
//! nodes and check that what remains is connected.

use std::collections::BTreeSet;

use manet_fd::topology::connectivity::is_connected;
use manet_fd::{NodeId, Point, Topology};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn subsets(n: usize, max: usize) -> Vec<BTreeSet<NodeId>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize <= max)
        .map(|m| (0..n as u32).filter(|i| m >> i & 1 == 1).map(NodeId).collect())
        .collect()
}

pub fn brute_force(top: &Topology, f: usize) -> bool {
    top.len() >= f + 2
        && subsets(top.len(), f)
            .iter()
            .all(|gone| is_connected(&top.without(gone)))
}

pub struct Comparison {
    pub graphs: usize,
    pub mismatches: Vec<String>,
    /// (graph, f) pairs the oracle calls covering.
    pub covering: usize,
    pub pairs: usize,
}

/// `graphs` random unit-disk graphs of 1 to 8 nodes, each checked for
/// f = 0..=3.
pub fn compare_geometric(graphs: usize, seed: u64) -> Comparison {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cmp = Comparison {
        graphs,
        mismatches: Vec::new(),
        covering: 0,
        pairs: 0,
    };
    for _ in 0..graphs {
        let n = rng.gen_range(1..=8);
        let side = rng.gen_range(50.0..200.0);
        let sites = (0..n)
            .map(|_| Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
            .collect();
        let top = Topology::new(sites, 100.0, side);
        for f in 0..4 {
            let expected = brute_force(&top, f);
            if top.is_f_covering(f) != expected {
                cmp.mismatches.push(format!("f = {f}\n{}", top.to_text()));
            }
            cmp.covering += usize::from(expected);
            cmp.pairs += 1;
        }
    }
    cmp
}
