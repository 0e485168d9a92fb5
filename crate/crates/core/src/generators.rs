//! Deterministic graph families used for experiments.

use alloc::vec::Vec;

use crate::graph::Graph;
use crate::rng;

/// Path on `n` vertices.
pub fn path(n: usize) -> Graph {
    let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    Graph::from_edges(n, &edges).unwrap()
}

/// Cycle on `n` vertices; for `n < 3` this is the path.
pub fn cycle(n: usize) -> Graph {
    let mut edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
    if n >= 3 {
        edges.push((0, n - 1));
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// `k × k` patch of the square lattice; vertex `(i, j)` is `i·k + j`.
pub fn grid(k: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let v = i * k + j;
            if j + 1 < k {
                edges.push((v, v + 1));
            }
            if i + 1 < k {
                edges.push((v, v + k));
            }
        }
    }
    Graph::from_edges(k * k, &edges).unwrap()
}

/// `k × k` patch of the lattice with diagonals (king moves).
pub fn gridinf(k: usize) -> Graph {
    let mut edges = Vec::new();
    for i in 0..k {
        for j in 0..k {
            let v = i * k + j;
            if j + 1 < k {
                edges.push((v, v + 1));
            }
            if i + 1 < k {
                edges.push((v, v + k));
                if j + 1 < k {
                    edges.push((v, v + k + 1));
                }
                if j > 0 {
                    edges.push((v, v + k - 1));
                }
            }
        }
    }
    Graph::from_edges(k * k, &edges).unwrap()
}

/// Complete rooted tree with the given depth and branching; children of
/// `v` are `branching·v + 1 ..= branching·v + branching`.
pub fn tree(depth: u32, branching: usize) -> Graph {
    let mut n = 1usize;
    let mut level = 1usize;
    for _ in 0..depth {
        level *= branching;
        n += level;
    }
    let edges: Vec<_> = (1..n).map(|v| ((v - 1) / branching, v)).collect();
    Graph::from_edges(n, &edges).unwrap()
}

/// Random graph with maximum degree `d`: pairs `u < v` are visited in
/// lexicographic order and kept with probability `d / (n − 1)` unless an
/// endpoint already has degree `d`.
pub fn er_bounded(n: usize, d: usize, seed: u64) -> Graph {
    let mut rng = rng::stream(seed, &[]);
    let mut degree = alloc::vec![0usize; n];
    let mut edges = Vec::new();
    let p = if n > 1 {
        (d as f64 / (n - 1) as f64).min(1.0)
    } else {
        0.0
    };
    for u in 0..n {
        for v in u + 1..n {
            if rng::unit_f64(&mut rng) < p && degree[u] < d && degree[v] < d {
                degree[u] += 1;
                degree[v] += 1;
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}
