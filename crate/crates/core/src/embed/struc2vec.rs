//! Multilayer structural-similarity graph and the walks over it.
//!
//! Layer `k` connects candidate node pairs with weight `exp(-f_k(u, v))`,
//! where `f_k` accumulates dynamic-time-warping costs between the sorted
//! degree sequences of the rings at hop distance `0..=k`. Walkers either
//! step inside their layer or move one layer up or down.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::alias::AliasTable;
use super::walks::{walk_rng, Corpus};
use super::{Struc2vecConfig, WalkConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Sorted degree sequences of the BFS rings around `node`, up to `max_depth`.
pub fn ring_degree_sequences(g: &Graph, node: NodeId, max_depth: usize) -> Vec<Vec<u32>> {
    let mut dist = vec![usize::MAX; g.node_count()];
    let mut rings: Vec<Vec<u32>> = vec![Vec::new()];
    let mut queue = VecDeque::new();
    dist[node] = 0;
    queue.push_back(node);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        if rings.len() <= d {
            rings.push(Vec::new());
        }
        rings[d].push(g.degree(u) as u32);
        if d == max_depth {
            continue;
        }
        for &v in g.neighbors(u) {
            if dist[v] == usize::MAX {
                dist[v] = d + 1;
                queue.push_back(v);
            }
        }
    }
    for ring in &mut rings {
        ring.sort_unstable();
    }
    rings
}

/// Element cost `max/min - 1` between two degrees.
#[inline]
pub fn degree_cost(a: u32, b: u32) -> f64 {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    if lo == 0 {
        return hi as f64;
    }
    hi as f64 / lo as f64 - 1.0
}

/// Dynamic-time-warping distance between two degree sequences.
pub fn dtw(a: &[u32], b: &[u32]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
    }
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for &x in a {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let best = prev[j].min(cur[j - 1]).min(prev[j - 1]);
            cur[j] = degree_cost(x, b[j - 1]) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Cumulative structural distances `f_0..f_{L-1}` from precomputed rings.
///
/// Stops at the first layer where either node has no ring.
pub fn cumulative_distances(a: &[Vec<u32>], b: &[Vec<u32>], layers: usize) -> Vec<f64> {
    let depth = layers.min(a.len()).min(b.len());
    let mut out = Vec::with_capacity(depth);
    let mut acc = 0.0;
    for k in 0..depth {
        acc += dtw(&a[k], &b[k]);
        out.push(acc);
    }
    out
}

/// Structural distance profile of one pair, computed from scratch.
pub fn structural_distance(g: &Graph, u: NodeId, v: NodeId, layers: usize) -> Vec<f64> {
    let depth = layers.saturating_sub(1);
    cumulative_distances(
        &ring_degree_sequences(g, u, depth),
        &ring_degree_sequences(g, v, depth),
        layers,
    )
}

struct Layer {
    neighbors: Vec<Vec<(u32, f64)>>,
    tables: Vec<Option<AliasTable>>,
    up_probability: Vec<f64>,
}

/// The weighted multilayer context graph.
pub struct MultilayerGraph {
    node_count: usize,
    layers: Vec<Layer>,
}

impl MultilayerGraph {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Weight `exp(-f_k(u, v))` of the layer-`k` edge, if the pair is linked there.
    pub fn weight(&self, layer: usize, u: NodeId, v: NodeId) -> Option<f64> {
        self.layers
            .get(layer)?
            .neighbors[u]
            .iter()
            .find(|&&(x, _)| x as usize == v)
            .map(|&(_, w)| w)
    }

    pub fn layer_neighbors(&self, layer: usize, u: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.layers[layer].neighbors[u].iter().map(|&(v, _)| v as usize)
    }

    /// Probability that a walker at `u` in `layer` moves up when it changes layer.
    pub fn up_probability(&self, layer: usize, u: NodeId) -> f64 {
        self.layers[layer].up_probability[u]
    }

    fn present(&self, layer: usize, u: NodeId) -> bool {
        self.layers
            .get(layer)
            .is_some_and(|l| !l.neighbors[u].is_empty())
    }

    fn walk(&self, start: NodeId, length: usize, stay: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let mut walk = Vec::with_capacity(length);
        walk.push(start as u32);
        let mut cur = start;
        let mut layer = 0;
        if !self.present(0, start) {
            return walk;
        }
        while walk.len() < length {
            if rng.random::<f64>() < stay {
                let l = &self.layers[layer];
                let table = l.tables[cur].as_ref().expect("walker sits on a linked node");
                cur = l.neighbors[cur][table.sample(rng)].0 as usize;
                walk.push(cur as u32);
            } else if rng.random::<f64>() < self.layers[layer].up_probability[cur] {
                if self.present(layer + 1, cur) {
                    layer += 1;
                }
            } else if layer > 0 {
                layer -= 1;
            }
        }
        walk
    }
}

/// Candidate partners per node: the `count` nearest in degree-sorted order.
///
/// Ties in degree are ordered by the sorted neighbor-degree sequence, then index.
fn degree_candidates(g: &Graph, count: usize) -> BTreeSet<(usize, usize)> {
    let n = g.node_count();
    let signature = |u: usize| {
        let mut s: Vec<usize> = g.neighbors(u).iter().map(|&v| g.degree(v)).collect();
        s.sort_unstable();
        s
    };
    let signatures: Vec<Vec<usize>> = (0..n).map(signature).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        g.degree(a)
            .cmp(&g.degree(b))
            .then_with(|| signatures[a].cmp(&signatures[b]))
            .then(a.cmp(&b))
    });
    let deg = |pos: usize| g.degree(order[pos]) as i64;
    let mut pairs = BTreeSet::new();
    for i in 0..n {
        let here = deg(i);
        let (mut left, mut right) = (i as i64 - 1, i + 1);
        let mut taken = 0;
        while taken < count && (left >= 0 || right < n) {
            let take_left = if left < 0 {
                false
            } else if right >= n {
                true
            } else {
                (here - deg(left as usize)).abs() <= (deg(right) - here).abs()
            };
            let j = if take_left {
                left -= 1;
                order[(left + 1) as usize]
            } else {
                right += 1;
                order[right - 1]
            };
            let u = order[i];
            pairs.insert((u.min(j), u.max(j)));
            taken += 1;
        }
    }
    pairs
}

/// Builds the multilayer graph over degree-order candidate pairs.
pub fn build_struc2vec_layers(g: &Graph, cfg: &Struc2vecConfig) -> Result<MultilayerGraph> {
    cfg.validate()?;
    g.require_connected()?;
    let n = g.node_count();
    let requested = cfg.layers;
    let mut rings: Vec<Vec<Vec<u32>>> = (0..n)
        .map(|u| ring_degree_sequences(g, u, requested - 1))
        .collect();
    let diameter = rings.iter().map(|r| r.len() - 1).max().unwrap_or(0);
    let layers = if requested > diameter + 1 {
        log::warn!(
            "struc2vec: {requested} layers requested but diameter is {diameter}; using {}",
            diameter + 1
        );
        diameter + 1
    } else {
        requested
    };
    for r in &mut rings {
        r.truncate(layers);
    }

    let count = cfg
        .candidates
        .unwrap_or_else(|| (n.max(2) as f64).log2().ceil() as usize)
        .max(1);
    let pairs = degree_candidates(g, count);

    let mut adjacency: Vec<Vec<Vec<(u32, f64)>>> = vec![vec![Vec::new(); n]; layers];
    for &(u, v) in &pairs {
        let profile = cumulative_distances(&rings[u], &rings[v], layers);
        for (k, f) in profile.into_iter().enumerate() {
            let w = (-f).exp();
            adjacency[k][u].push((v as u32, w));
            adjacency[k][v].push((u as u32, w));
        }
    }

    let mut built = Vec::with_capacity(layers);
    for neighbors in adjacency {
        let (sum, edges) = neighbors
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, c), &(_, w)| (s + w, c + 1));
        let mean = if edges > 0 { sum / edges as f64 } else { 0.0 };
        let mut tables = Vec::with_capacity(n);
        let mut up_probability = Vec::with_capacity(n);
        for list in &neighbors {
            let weights: Vec<f64> = list.iter().map(|&(_, w)| w).collect();
            let table = if weights.is_empty() {
                None
            } else {
                Some(AliasTable::new(&weights).ok_or_else(|| {
                    Error::Numerical("struc2vec layer weights underflowed to zero".into())
                })?)
            };
            tables.push(table);
            let strong = weights.iter().filter(|&&w| w > mean).count() as f64;
            let up = (strong + std::f64::consts::E).ln();
            up_probability.push(up / (up + 1.0));
        }
        built.push(Layer {
            neighbors,
            tables,
            up_probability,
        });
    }
    Ok(MultilayerGraph {
        node_count: n,
        layers: built,
    })
}

/// struc2vec corpus over a prebuilt multilayer graph.
pub fn walks_struc2vec(
    layers: &MultilayerGraph,
    cfg: &WalkConfig,
    s2v: &Struc2vecConfig,
) -> Result<Corpus> {
    cfg.validate()?;
    let n = layers.node_count;
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        for start in 0..n {
            let mut rng = walk_rng(cfg.seed, round, start, n);
            walks.push(layers.walk(start, cfg.walk_length, s2v.stay_probability, &mut rng));
        }
    }
    Ok(Corpus {
        node_count: n,
        walks,
    })
}
