//! Undirected, unweighted graphs with labelled nodes.
//!
//! Every other module consumes [`Graph`]: metrics, walks, ego features and
//! rankings all index nodes by the dense `0..node_count` ids assigned here.

mod generate;
mod io;

use std::collections::{HashMap, VecDeque};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use generate::{generate, generate_planted, PlantedGraph, SyntheticKind, SyntheticSpec};
pub use io::{load_edge_list, parse_edge_list, write_edge_list, DropCounts, EdgeListOptions};

/// Dense node index.
pub type NodeId = usize;

/// Immutable undirected graph in sorted adjacency-list form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    labels: Vec<String>,
    adjacency: Vec<Vec<NodeId>>,
    edge_count: usize,
}

impl Graph {
    /// Builds a graph over `labels.len()` nodes from an edge iterator.
    ///
    /// Self-loops and repeated edges are dropped and counted.
    pub fn from_edges<I>(labels: Vec<String>, edges: I) -> Result<(Self, DropCounts)>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        let mut drops = DropCounts::default();
        for (u, v) in edges {
            for idx in [u, v] {
                if idx >= n {
                    return Err(Error::InvalidNode {
                        index: idx,
                        node_count: n,
                    });
                }
            }
            if u == v {
                drops.self_loops += 1;
                continue;
            }
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        let mut pushed = 0;
        let mut half_edges = 0;
        for list in adjacency.iter_mut() {
            pushed += list.len();
            list.sort_unstable();
            list.dedup();
            half_edges += list.len();
        }
        drops.duplicates = (pushed - half_edges) / 2;
        let mut seen = HashMap::with_capacity(n);
        for (i, label) in labels.iter().enumerate() {
            if seen.insert(label.as_str(), i).is_some() {
                return Err(Error::invalid(format!("duplicate node label `{label}`")));
            }
        }
        Ok((
            Graph {
                labels,
                adjacency,
                edge_count: half_edges / 2,
            },
            drops,
        ))
    }

    /// Builds an unlabelled graph whose labels are the decimal node indices.
    pub fn from_index_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let labels = (0..node_count).map(|i| i.to_string()).collect();
        Self::from_edges(labels, edges).map(|(g, _)| g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    /// Finds the node carrying `label`.
    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sorted neighbor list of `node`.
    #[inline]
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.adjacency[node]
    }

    #[inline]
    pub fn degree(&self, node: NodeId) -> usize {
        self.adjacency[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    #[inline]
    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Edges as `(min, max)` pairs in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node >= self.node_count() {
            return Err(Error::InvalidNode {
                index: node,
                node_count: self.node_count(),
            });
        }
        Ok(())
    }

    /// Hop distances from `source`; unreachable nodes are `usize::MAX`.
    pub fn bfs_distances(&self, source: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            let next = dist[u] + 1;
            for &v in self.neighbors(u) {
                if dist[v] == usize::MAX {
                    dist[v] = next;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Component id per node, numbered by smallest member index.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..n {
            if comp[start] != usize::MAX {
                continue;
            }
            comp[start] = count;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in self.neighbors(u) {
                    if comp[v] == usize::MAX {
                        comp[v] = count;
                        stack.push(v);
                    }
                }
            }
            count += 1;
        }
        (comp, count)
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() > 0 && self.components().1 == 1
    }

    pub(crate) fn require_connected(&self) -> Result<()> {
        let (_, components) = self.components();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(())
    }

    /// Content hash over labels and edges; changes whenever the graph does.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update([0u8]);
        }
        for (u, v) in self.edges() {
            hasher.update((u as u64).to_le_bytes());
            hasher.update((v as u64).to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Induced subgraph on `keep` (which must be sorted, distinct and in range).
    pub fn induced(&self, keep: &[NodeId]) -> Graph {
        let mut old_to_new = vec![usize::MAX; self.node_count()];
        for (new, &old) in keep.iter().enumerate() {
            old_to_new[old] = new;
        }
        let adjacency: Vec<Vec<NodeId>> = keep
            .iter()
            .map(|&old| {
                self.neighbors(old)
                    .iter()
                    .filter_map(|&v| (old_to_new[v] != usize::MAX).then_some(old_to_new[v]))
                    .collect()
            })
            .collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Graph {
            labels: keep.iter().map(|&i| self.labels[i].clone()).collect(),
            adjacency,
            edge_count,
        }
    }
}

/// Result of [`largest_component`].
#[derive(Debug, Clone)]
pub struct Component {
    pub graph: Graph,
    /// `old_to_new[i]` is the index of original node `i`, if it was kept.
    pub old_to_new: Vec<Option<NodeId>>,
    /// Original index of each kept node.
    pub new_to_old: Vec<NodeId>,
}

/// Induced subgraph on the largest connected component.
///
/// Ties go to the component holding the smallest original index.
pub fn largest_component(g: &Graph) -> Component {
    let (comp, count) = g.components();
    let mut sizes = vec![0usize; count];
    for &c in &comp {
        sizes[c] += 1;
    }
    // component ids are assigned in order of their smallest member
    let mut best = 0;
    for (c, &size) in sizes.iter().enumerate() {
        if size > sizes[best] {
            best = c;
        }
    }
    let new_to_old: Vec<NodeId> = (0..g.node_count()).filter(|&i| comp[i] == best).collect();
    let mut old_to_new = vec![None; g.node_count()];
    for (new, &old) in new_to_old.iter().enumerate() {
        old_to_new[old] = Some(new);
    }
    Component {
        graph: g.induced(&new_to_old),
        old_to_new,
        new_to_old,
    }
}

/// Number of common neighbors of `u` and `v`, not counting `u` or `v`.
pub fn shared_neighbors(g: &Graph, u: NodeId, v: NodeId) -> Result<usize> {
    g.check_node(u)?;
    g.check_node(v)?;
    Ok(sorted_intersection_count(g.neighbors(u), g.neighbors(v), |x| {
        x != u && x != v
    }))
}

pub(crate) fn sorted_intersection_count(
    a: &[NodeId],
    b: &[NodeId],
    keep: impl Fn(NodeId) -> bool,
) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if keep(a[i]) {
                    count += 1;
                }
                i += 1;
                j += 1;
            }
        }
    }
    count
}
