//! First- and second-order random walks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::alias::AliasTable;
use super::{Node2vecParams, WalkConfig};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// A set of node sequences fed to the skip-gram trainer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub node_count: usize,
    pub walks: Vec<Vec<u32>>,
}

impl Corpus {
    pub fn token_count(&self) -> usize {
        self.walks.iter().map(Vec::len).sum()
    }
}

/// Independent stream for the walk of `round` started at `start`.
pub(crate) fn walk_rng(seed: u64, round: usize, start: NodeId, node_count: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((round * node_count + start) as u64);
    rng
}

fn collect_walks<F>(g: &Graph, cfg: &WalkConfig, mut walk_from: F) -> Corpus
where
    F: FnMut(NodeId, &mut ChaCha8Rng) -> Vec<u32>,
{
    let n = g.node_count();
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        for start in 0..n {
            let mut rng = walk_rng(cfg.seed, round, start, n);
            walks.push(walk_from(start, &mut rng));
        }
    }
    Corpus {
        node_count: n,
        walks,
    }
}

/// DeepWalk corpus: each step moves to a uniformly chosen neighbor.
pub fn walks_uniform(g: &Graph, cfg: &WalkConfig) -> Result<Corpus> {
    cfg.validate()?;
    g.require_connected()?;
    Ok(collect_walks(g, cfg, |start, rng| {
        let mut walk = Vec::with_capacity(cfg.walk_length);
        let mut cur = start;
        walk.push(cur as u32);
        while walk.len() < cfg.walk_length {
            let nbrs = g.neighbors(cur);
            if nbrs.is_empty() {
                break;
            }
            cur = nbrs[rng.random_range(0..nbrs.len())];
            walk.push(cur as u32);
        }
        walk
    }))
}

/// Precomputed second-order transition tables, one per directed edge.
pub struct Node2vecSampler<'g> {
    graph: &'g Graph,
    offsets: Vec<usize>,
    tables: Vec<AliasTable>,
}

/// Unnormalized bias of stepping `prev -> cur -> next`.
pub fn node2vec_bias(g: &Graph, params: &Node2vecParams, prev: NodeId, next: NodeId) -> f64 {
    if next == prev {
        1.0 / params.p
    } else if g.has_edge(prev, next) {
        1.0
    } else {
        1.0 / params.q
    }
}

impl<'g> Node2vecSampler<'g> {
    pub fn new(g: &'g Graph, params: &Node2vecParams) -> Result<Self> {
        params.validate()?;
        let n = g.node_count();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for u in 0..n {
            offsets.push(offsets[u] + g.degree(u));
        }
        let mut tables = Vec::with_capacity(offsets[n]);
        for prev in 0..n {
            for &cur in g.neighbors(prev) {
                let weights: Vec<f64> = g
                    .neighbors(cur)
                    .iter()
                    .map(|&next| node2vec_bias(g, params, prev, next))
                    .collect();
                let table = AliasTable::new(&weights).ok_or_else(|| {
                    Error::Numerical(format!("invalid node2vec weights on edge {prev}->{cur}"))
                })?;
                tables.push(table);
            }
        }
        Ok(Node2vecSampler {
            graph: g,
            offsets,
            tables,
        })
    }

    /// Transition table for the walker that just moved `prev -> cur`.
    pub fn table(&self, prev: NodeId, cur: NodeId) -> &AliasTable {
        let pos = self
            .graph
            .neighbors(prev)
            .binary_search(&cur)
            .expect("walk follows an edge");
        &self.tables[self.offsets[prev] + pos]
    }

    /// Samples the successor of `cur` given the previous node.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, prev: NodeId, cur: NodeId, rng: &mut R) -> NodeId {
        let idx = self.table(prev, cur).sample(rng);
        self.graph.neighbors(cur)[idx]
    }

    fn walk(&self, start: NodeId, length: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
        let g = self.graph;
        let mut walk = Vec::with_capacity(length);
        walk.push(start as u32);
        if length < 2 || g.degree(start) == 0 {
            return walk;
        }
        let first = g.neighbors(start)[rng.random_range(0..g.degree(start))];
        walk.push(first as u32);
        let (mut prev, mut cur) = (start, first);
        while walk.len() < length {
            let next = self.step(prev, cur, rng);
            walk.push(next as u32);
            prev = cur;
            cur = next;
        }
        walk
    }
}

/// node2vec corpus: second-order walks biased by the return and in-out parameters.
pub fn walks_node2vec(g: &Graph, cfg: &WalkConfig, params: &Node2vecParams) -> Result<Corpus> {
    cfg.validate()?;
    g.require_connected()?;
    let sampler = Node2vecSampler::new(g, params)?;
    Ok(collect_walks(g, cfg, |start, rng| {
        sampler.walk(start, cfg.walk_length, rng)
    }))
}
