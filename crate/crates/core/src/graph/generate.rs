use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    BarabasiAlbert,
    PlantedPartition,
}

/// Parameters of a seeded synthetic graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    #[serde(default = "one")]
    pub ba_m: usize,
    #[serde(default = "one")]
    pub communities: usize,
    #[serde(default)]
    pub intra_p: f64,
    #[serde(default)]
    pub inter_p: f64,
    #[serde(default)]
    pub bridges_per_community: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub require_connected: bool,
}

fn one() -> usize {
    1
}

impl SyntheticSpec {
    pub fn barabasi_albert(n: usize, m: usize, seed: u64) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::BarabasiAlbert,
            n,
            ba_m: m,
            communities: 1,
            intra_p: 0.0,
            inter_p: 0.0,
            bridges_per_community: 0,
            seed,
            require_connected: false,
        }
    }

    pub fn planted(
        n: usize,
        communities: usize,
        intra_p: f64,
        inter_p: f64,
        bridges_per_community: usize,
        seed: u64,
    ) -> Self {
        SyntheticSpec {
            kind: SyntheticKind::PlantedPartition,
            n,
            ba_m: 1,
            communities,
            intra_p,
            inter_p,
            bridges_per_community,
            seed,
            require_connected: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SyntheticKind::BarabasiAlbert => {
                if self.ba_m < 1 {
                    return Err(Error::invalid("ba_m must be at least 1"));
                }
                if self.n <= self.ba_m {
                    return Err(Error::invalid("n must exceed ba_m"));
                }
            }
            SyntheticKind::PlantedPartition => {
                if self.communities < 1 || self.n <= self.communities {
                    return Err(Error::invalid("need 1 <= communities < n"));
                }
                let ok = (0.0..=1.0).contains(&self.inter_p)
                    && (0.0..=1.0).contains(&self.intra_p)
                    && self.inter_p < self.intra_p;
                if !ok {
                    return Err(Error::invalid("need 0 <= inter_p < intra_p <= 1"));
                }
                let smallest = self.n / self.communities;
                if self.bridges_per_community > smallest {
                    return Err(Error::invalid("more bridges than community members"));
                }
                if self.bridges_per_community > 0 && self.communities < 2 {
                    return Err(Error::invalid("bridges need at least two communities"));
                }
            }
        }
        Ok(())
    }
}

/// A planted-partition graph together with its generating labels.
#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub graph: Graph,
    pub community_of: Vec<usize>,
    /// Designated bridge nodes, grouped by community.
    pub bridges: Vec<NodeId>,
}

/// Generates the graph described by `spec`; a pure function of the spec.
pub fn generate(spec: &SyntheticSpec) -> Result<Graph> {
    spec.validate()?;
    let graph = match spec.kind {
        SyntheticKind::BarabasiAlbert => barabasi_albert(spec.n, spec.ba_m, spec.seed)?,
        SyntheticKind::PlantedPartition => planted_partition(spec)?.graph,
    };
    if spec.require_connected {
        graph.require_connected()?;
    }
    Ok(graph)
}

/// Like [`generate`] for planted partitions, but keeps community and bridge labels.
pub fn generate_planted(spec: &SyntheticSpec) -> Result<PlantedGraph> {
    spec.validate()?;
    if spec.kind != SyntheticKind::PlantedPartition {
        return Err(Error::invalid("generate_planted needs a planted_partition spec"));
    }
    let planted = planted_partition(spec)?;
    if spec.require_connected {
        planted.graph.require_connected()?;
    }
    Ok(planted)
}

fn barabasi_albert(n: usize, m: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + m * (n - m));
    // every endpoint of every edge, so uniform draws are degree-proportional
    let mut endpoints: Vec<NodeId> = Vec::new();
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for new in m..n {
        chosen.clear();
        while chosen.len() < m {
            let target = if endpoints.is_empty() {
                rng.random_range(0..new)
            } else {
                endpoints[rng.random_range(0..endpoints.len())]
            };
            if !chosen.contains(&target) {
                chosen.push(target);
            }
        }
        for &t in &chosen {
            edges.push((new, t));
            endpoints.extend([new, t]);
        }
    }
    Graph::from_index_edges(n, edges)
}

fn planted_partition(spec: &SyntheticSpec) -> Result<PlantedGraph> {
    let n = spec.n;
    let c = spec.communities;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let community_of: Vec<usize> = (0..n).map(|i| i * c / n).collect();
    let mut members = vec![Vec::new(); c];
    for (i, &k) in community_of.iter().enumerate() {
        members[k].push(i);
    }

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community_of[u] == community_of[v] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if p > 0.0 && rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut bridges = Vec::new();
    for list in &members {
        for idx in sample(&mut rng, list.len(), spec.bridges_per_community) {
            bridges.push(list[idx]);
        }
    }
    let mut is_bridge = vec![false; n];
    for &b in &bridges {
        is_bridge[b] = true;
    }
    for &b in &bridges {
        // targets are never bridges themselves, so each bridge ends with exactly one extra edge
        let candidates: Vec<NodeId> = (0..n)
            .filter(|&x| community_of[x] != community_of[b] && !is_bridge[x])
            .collect();
        if candidates.is_empty() {
            return Err(Error::invalid("no non-bridge node outside a bridge's community"));
        }
        edges.push((b, candidates[rng.random_range(0..candidates.len())]));
    }

    let graph = Graph::from_index_edges(n, edges)?;
    Ok(PlantedGraph {
        graph,
        community_of,
        bridges,
    })
}
