//! Path- and spectrum-based centralities.

use std::collections::VecDeque;

use crate::graph::Graph;

/// Unnormalized betweenness: for each node, the sum over unordered pairs
/// `{s, t}` (neither equal to the node) of the fraction of shortest
/// `s`–`t` paths passing through it.
///
/// Dependency accumulation over one BFS tree per source.
pub fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.node_count();
    let mut centrality = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::with_capacity(n);
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in g.neighbors(w) {
                // v is a predecessor of w on shortest paths from s
                if dist[v] != usize::MAX && dist[v] + 1 == dist[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    // every unordered pair was counted from both endpoints
    for c in &mut centrality {
        *c /= 2.0;
    }
    centrality
}

/// Perron eigenvector of the adjacency matrix, unit Euclidean norm, nonnegative.
///
/// Iterates with `A + I`, which has the same eigenvectors but does not
/// oscillate on bipartite graphs.
pub fn eigenvector(g: &Graph, tolerance: f64, max_iterations: usize) -> Vec<f64> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iterations {
        for (u, out) in next.iter_mut().enumerate() {
            *out = x[u] + g.neighbors(u).iter().map(|&v| x[v]).sum::<f64>();
        }
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut next {
            *v /= norm;
        }
        let change = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        std::mem::swap(&mut x, &mut next);
        if change < tolerance {
            return x;
        }
    }
    log::warn!("eigenvector centrality did not reach tolerance {tolerance}");
    x
}

/// PageRank with uniform teleport; mass of isolated nodes is spread uniformly.
pub fn pagerank(g: &Graph, damping: f64, tolerance: f64, max_iterations: usize) -> Vec<f64> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let mut x = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..max_iterations {
        let dangling: f64 = (0..n).filter(|&u| g.degree(u) == 0).map(|u| x[u]).sum();
        let base = (1.0 - damping) / nf + damping * dangling / nf;
        for (u, out) in next.iter_mut().enumerate() {
            let inflow: f64 = g
                .neighbors(u)
                .iter()
                .map(|&v| x[v] / g.degree(v) as f64)
                .sum();
            *out = base + damping * inflow;
        }
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut x, &mut next);
        if change < tolerance {
            break;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter().map(|v| v / total).collect()
}
