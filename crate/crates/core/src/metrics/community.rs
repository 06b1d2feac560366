//! Seeded greedy modularity optimization (Louvain local moving + aggregation).

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    pub community_of: Vec<usize>,
    pub community_count: usize,
}

impl CommunityAssignment {
    /// Wraps an arbitrary labelling, renumbering it densely by first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let (community_of, community_count) = renumber(labels);
        CommunityAssignment {
            community_of,
            community_count,
        }
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.community_count];
        for (node, &c) in self.community_of.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    pub(crate) fn check(&self, g: &Graph) -> Result<()> {
        if self.community_of.len() != g.node_count() {
            return Err(Error::DimensionMismatch {
                expected: g.node_count(),
                found: self.community_of.len(),
            });
        }
        if self.community_of.iter().any(|&c| c >= self.community_count) {
            return Err(Error::invalid("community index out of range"));
        }
        Ok(())
    }
}

fn renumber(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Newman modularity of a partition of an unweighted graph.
pub fn modularity(g: &Graph, community_of: &[usize]) -> f64 {
    let two_m = 2.0 * g.edge_count() as f64;
    if two_m == 0.0 {
        return 0.0;
    }
    let count = community_of.iter().copied().max().map_or(0, |c| c + 1);
    let mut internal = vec![0.0; count];
    let mut total = vec![0.0; count];
    for u in 0..g.node_count() {
        let cu = community_of[u];
        total[cu] += g.degree(u) as f64;
        for &v in g.neighbors(u) {
            if community_of[v] == cu {
                internal[cu] += 1.0;
            }
        }
    }
    internal
        .iter()
        .zip(&total)
        .map(|(&inside, &tot)| inside / two_m - (tot / two_m).powi(2))
        .sum()
}

struct LevelGraph {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    strength: Vec<f64>,
    two_m: f64,
}

impl LevelGraph {
    fn from_graph(g: &Graph) -> Self {
        let adjacency: Vec<Vec<(usize, f64)>> = (0..g.node_count())
            .map(|u| g.neighbors(u).iter().map(|&v| (v, 1.0)).collect())
            .collect();
        let strength = (0..g.node_count()).map(|u| g.degree(u) as f64).collect();
        LevelGraph {
            adjacency,
            self_weight: vec![0.0; g.node_count()],
            strength,
            two_m: 2.0 * g.edge_count() as f64,
        }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    /// Moves nodes greedily until no single move raises modularity.
    /// Returns a dense labelling of the level's nodes.
    fn local_moving(&self, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut comm: Vec<usize> = (0..n).collect();
        let mut tot = self.strength.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut link = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        loop {
            let mut moved = false;
            for &i in &order {
                let ci = comm[i];
                let ki = self.strength[i];
                for &(j, w) in &self.adjacency[i] {
                    let cj = comm[j];
                    if link[cj] == 0.0 {
                        touched.push(cj);
                    }
                    link[cj] += w;
                }
                tot[ci] -= ki;
                let mut best = ci;
                let mut best_gain = link[ci] - tot[ci] * ki / self.two_m;
                for &c in &touched {
                    let gain = link[c] - tot[c] * ki / self.two_m;
                    if gain > best_gain + 1e-12 {
                        best_gain = gain;
                        best = c;
                    }
                }
                tot[best] += ki;
                if best != ci {
                    comm[i] = best;
                    moved = true;
                }
                for &c in &touched {
                    link[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
        }
        renumber(&comm)
    }

    fn aggregate(&self, comm: &[usize], count: usize) -> LevelGraph {
        let mut weights: Vec<std::collections::BTreeMap<usize, f64>> =
            vec![Default::default(); count];
        let mut self_weight = vec![0.0; count];
        let mut strength = vec![0.0; count];
        for u in 0..self.len() {
            let cu = comm[u];
            strength[cu] += self.strength[u];
            self_weight[cu] += self.self_weight[u];
            for &(v, w) in &self.adjacency[u] {
                let cv = comm[v];
                if cu == cv {
                    // seen from both endpoints, so this accumulates 2w per internal edge
                    self_weight[cu] += w;
                } else {
                    *weights[cu].entry(cv).or_insert(0.0) += w;
                }
            }
        }
        LevelGraph {
            adjacency: weights.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_weight,
            strength,
            two_m: self.two_m,
        }
    }
}

/// Partitions `g` by greedy modularity maximization; deterministic in `seed`.
pub fn detect_communities(g: &Graph, seed: u64) -> CommunityAssignment {
    let n = g.node_count();
    if g.edge_count() == 0 {
        return CommunityAssignment::from_labels(&(0..n).collect::<Vec<_>>());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut level = LevelGraph::from_graph(g);
    let mut node_comm: Vec<usize> = (0..n).collect();
    loop {
        let (comm, count) = level.local_moving(&mut rng);
        if count == level.len() {
            break;
        }
        for c in &mut node_comm {
            *c = comm[*c];
        }
        level = level.aggregate(&comm, count);
    }
    CommunityAssignment::from_labels(&node_comm)
}
