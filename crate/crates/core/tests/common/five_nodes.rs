//! The five-node worked example: edges A-B, A-C, B-C, B-D, C-E, D-E with
//! f = 1 and range density 3. B and C reach counters 5 and 10, then A
//! crashes.

use manet_fd::{FdState, NodeId, RoundStatus};

pub const A: usize = 0;
pub const B: usize = 1;
pub const C: usize = 2;
pub const D: usize = 3;
pub const E: usize = 4;
pub const CORRECT: [usize; 4] = [B, C, D, E];

const EDGES: [(usize, usize); 6] = [(A, B), (A, C), (B, C), (B, D), (C, E), (D, E)];

pub struct Net {
    pub states: Vec<FdState>,
    adj: Vec<Vec<usize>>,
    pub alive: Vec<bool>,
}

impl Net {
    pub fn new() -> Self {
        let mut adj = vec![Vec::new(); 5];
        for (a, b) in EDGES {
            adj[a].push(b);
            adj[b].push(a);
        }
        let states = (0..5).map(|i| FdState::new(NodeId(i as u32), 1, 3).unwrap()).collect();
        Self {
            states,
            adj,
            alive: vec![true; 5],
        }
    }

    /// One complete round of node `i`: query every live neighbour, collect
    /// the answers, close.
    pub fn round(&mut self, i: usize) {
        let q = self.states[i].begin_round().unwrap();
        for &j in &self.adj[i].clone() {
            if self.alive[j] {
                let r = self.states[j].handle_query(&q, false);
                self.states[i].on_response(&r).unwrap();
            }
        }
        assert_eq!(
            self.states[i].round_status(),
            Some(RoundStatus::Satisfied),
            "node {i} missed its quorum"
        );
        self.states[i].finish_round().unwrap();
    }

    pub fn tag_of_a(&self, i: usize) -> Option<u64> {
        self.states[i].suspected().tag_of(NodeId(A as u32))
    }

    /// Everyone runs a round, then B and C keep going alone until their
    /// counters reach 5 and 10.
    pub fn warmed_up() -> Self {
        let mut net = Self::new();
        for i in 0..5 {
            net.round(i);
        }
        for _ in 0..4 {
            net.round(B);
        }
        for _ in 0..9 {
            net.round(C);
        }
        net
    }
}

pub struct Outcome {
    pub counters_before: (u64, u64),
    pub first_suspicions: (Option<u64>, Option<u64>),
    /// Tag each correct node holds for A at the end, in `CORRECT` order.
    pub final_tags: Vec<Option<u64>>,
    pub final_suspicion_counts: Vec<usize>,
}

/// A crashes, B and C each detect it once, then three gossip rounds.
pub fn crash_of_a() -> Outcome {
    let mut net = Net::warmed_up();
    let counters_before = (net.states[B].counter(), net.states[C].counter());
    net.alive[A] = false;
    net.round(B);
    net.round(C);
    let first_suspicions = (net.tag_of_a(B), net.tag_of_a(C));
    for _ in 0..3 {
        for i in CORRECT {
            net.round(i);
        }
    }
    Outcome {
        counters_before,
        first_suspicions,
        final_tags: CORRECT.iter().map(|&i| net.tag_of_a(i)).collect(),
        final_suspicion_counts: CORRECT.iter().map(|&i| net.states[i].suspicions().len()).collect(),
    }
}

impl Outcome {
    pub fn as_expected(&self) -> bool {
        self.counters_before == (5, 10)
            && self.first_suspicions == (Some(5), Some(10))
            && self.final_tags.iter().all(|&t| t == Some(10))
            && self.final_suspicion_counts.iter().all(|&n| n == 1)
    }
}
