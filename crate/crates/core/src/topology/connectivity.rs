//! Vertex connectivity through unit-capacity max-flow on the vertex-split
//! digraph.

use std::collections::VecDeque;

/// Undirected graph as sorted adjacency lists over `0..n`.
pub type Adjacency = [Vec<usize>];

struct FlowNet {
    head: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u32>,
}

impl FlowNet {
    fn new(nodes: usize) -> Self {
        Self {
            head: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: u32) {
        self.head[from].push(self.to.len());
        self.to.push(to);
        self.cap.push(cap);
        self.head[to].push(self.to.len());
        self.to.push(from);
        self.cap.push(0);
    }

    /// Pushes unit augmenting paths until `limit` is reached or none remain.
    fn max_flow(&mut self, source: usize, sink: usize, limit: usize) -> usize {
        let mut flow = 0;
        let mut parent_edge = vec![usize::MAX; self.head.len()];
        while flow < limit {
            parent_edge.fill(usize::MAX);
            let mut queue = VecDeque::from([source]);
            let mut reached = false;
            while let Some(u) = queue.pop_front() {
                for &e in &self.head[u] {
                    let v = self.to[e];
                    if self.cap[e] > 0 && v != source && parent_edge[v] == usize::MAX {
                        parent_edge[v] = e;
                        if v == sink {
                            reached = true;
                            break;
                        }
                        queue.push_back(v);
                    }
                }
                if reached {
                    break;
                }
            }
            if !reached {
                break;
            }
            let mut v = sink;
            while v != source {
                let e = parent_edge[v];
                self.cap[e] -= 1;
                self.cap[e ^ 1] += 1;
                v = self.to[e ^ 1];
            }
            flow += 1;
        }
        flow
    }
}

/// Number of internally vertex-disjoint paths between the non-adjacent
/// vertices `s` and `t`, capped at `limit`.
pub fn local_connectivity(adj: &Adjacency, s: usize, t: usize, limit: usize) -> usize {
    let n = adj.len();
    // vertex v splits into in = 2v and out = 2v + 1
    let mut net = FlowNet::new(2 * n);
    for v in 0..n {
        let through = if v == s || v == t { u32::MAX / 2 } else { 1 };
        net.add_edge(2 * v, 2 * v + 1, through);
        for &w in &adj[v] {
            net.add_edge(2 * v + 1, 2 * w, 1);
        }
    }
    net.max_flow(2 * s + 1, 2 * t, limit)
}

fn adjacent(adj: &Adjacency, u: usize, v: usize) -> bool {
    adj[u].binary_search(&v).is_ok()
}

/// Whether the graph is `k`-vertex-connected.
///
/// A graph on `n` vertices is at most `(n - 1)`-connected; the complete graph
/// reaches that bound. Otherwise the minimum vertex cut separates some
/// non-adjacent pair, and it suffices to check pairs involving a fixed
/// minimum-degree vertex `v` or two of its neighbours.
pub fn is_k_connected(adj: &Adjacency, k: usize) -> bool {
    let n = adj.len();
    if k == 0 {
        return true;
    }
    if n <= k {
        return false;
    }
    let Some(v) = (0..n).min_by_key(|&u| adj[u].len()) else {
        return false;
    };
    if adj[v].len() < k {
        return false;
    }
    if adj.iter().all(|nbrs| nbrs.len() == n - 1) {
        return true;
    }
    for w in 0..n {
        if w != v && !adjacent(adj, v, w) && local_connectivity(adj, v, w, k) < k {
            return false;
        }
    }
    let nbrs = &adj[v];
    for (i, &x) in nbrs.iter().enumerate() {
        for &y in &nbrs[i + 1..] {
            if !adjacent(adj, x, y) && local_connectivity(adj, x, y, k) < k {
                return false;
            }
        }
    }
    true
}

/// Whether the graph is connected (the empty graph counts as connected).
pub fn is_connected(adj: &Adjacency) -> bool {
    let n = adj.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                stack.push(w);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    fn clique(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|v| (0..n).filter(|&w| w != v).collect()).collect()
    }

    #[test]
    fn path_has_a_cut_vertex() {
        let path = graph(3, &[(0, 1), (1, 2)]);
        assert!(is_k_connected(&path, 1));
        assert!(!is_k_connected(&path, 2));
        assert_eq!(local_connectivity(&path, 0, 2, 5), 1);
    }

    #[test]
    fn cliques() {
        for n in 1..7 {
            assert!(is_k_connected(&clique(n), n - 1));
            assert!(!is_k_connected(&clique(n), n));
        }
    }

    #[test]
    fn cycle_is_two_connected() {
        let cycle = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]);
        assert!(is_k_connected(&cycle, 2));
        assert!(!is_k_connected(&cycle, 3));
        assert_eq!(local_connectivity(&cycle, 0, 3, 9), 2);
    }

    #[test]
    fn disconnected() {
        let g = graph(4, &[(0, 1), (2, 3)]);
        assert!(!is_connected(&g));
        assert!(!is_k_connected(&g, 1));
    }
}
