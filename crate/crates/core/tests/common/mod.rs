#![allow(dead_code)]

use embedlens_core::Graph;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded connected graph: a random spanning tree plus each remaining pair
/// with probability `density`.
pub fn connected_graph(n: usize, density: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.push((order[i], order[j]));
    }
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < density {
                edges.push((u, v));
            }
        }
    }
    Graph::from_index_edges(n, edges).unwrap()
}

pub fn star(leaves: usize) -> Graph {
    Graph::from_index_edges(leaves + 1, (1..=leaves).map(|v| (0, v))).unwrap()
}
