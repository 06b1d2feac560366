//! Neighbor rankings of an anchor node and their NDCG agreement.
//!
//! Graph-space lists come from shared neighbors or from distances on one
//! normalized metric; embedding-space lists from cosine or Euclidean scores.
//! NDCG grades a presented list against an ideal list by the candidates'
//! positions in the ideal top-k.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::{shared_neighbors, Graph, NodeId};
use crate::metrics::{normalize_metrics, Metric, MetricsTable};

pub const DEFAULT_LIST_LENGTH: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Cosine,
    Euclidean,
    Graph,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Cosine => "cosine",
            Measure::Euclidean => "euclidean",
            Measure::Graph => "graph",
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Measure::Cosine),
            "euclidean" => Ok(Measure::Euclidean),
            "graph" => Ok(Measure::Graph),
            _ => Err(Error::Unknown {
                kind: "measure",
                name: s.to_string(),
            }),
        }
    }
}

/// Ordering for graph-space lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphOrder {
    /// The anchor's neighbors by common-neighbor count, descending.
    SharedFriends,
    /// Every other node by distance on one normalized metric, ascending.
    MetricDistance(Metric),
}

impl fmt::Display for GraphOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphOrder::SharedFriends => f.write_str("shared_friends"),
            GraphOrder::MetricDistance(m) => write!(f, "metric:{}", m.key()),
        }
    }
}

impl FromStr for GraphOrder {
    type Err = Error;

    /// Accepts `shared_friends` or a metric key, optionally prefixed `metric:`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "shared_friends" {
            return Ok(GraphOrder::SharedFriends);
        }
        let key = s.strip_prefix("metric:").unwrap_or(s);
        Ok(GraphOrder::MetricDistance(key.parse()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub node: NodeId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingList {
    pub anchor: NodeId,
    pub space_id: String,
    pub measure: Measure,
    pub k: usize,
    pub entries: Vec<RankEntry>,
}

impl RankingList {
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.entries.iter().map(|e| e.node)
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.iter().any(|e| e.node == node)
    }

    /// Absolute score change between consecutive entries.
    pub fn adjacent_deltas(&self) -> Vec<f64> {
        self.entries
            .windows(2)
            .map(|w| (w[1].score - w[0].score).abs())
            .collect()
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("list length k must be positive"));
    }
    Ok(())
}

pub fn rank_graph_space(
    g: &Graph,
    t: &MetricsTable,
    anchor: NodeId,
    order_by: GraphOrder,
    k: usize,
) -> Result<RankingList> {
    g.check_node(anchor)?;
    check_k(k)?;
    if t.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            found: t.node_count(),
        });
    }
    let mut entries = match order_by {
        GraphOrder::SharedFriends => {
            let mut scored = g
                .neighbors(anchor)
                .iter()
                .map(|&v| Ok((v, shared_neighbors(g, anchor, v)?)))
                .collect::<Result<Vec<_>>>()?;
            scored.sort_by(|a, b| {
                b.1.cmp(&a.1)
                    .then(g.degree(b.0).cmp(&g.degree(a.0)))
                    .then(a.0.cmp(&b.0))
            });
            scored
                .into_iter()
                .map(|(node, s)| RankEntry { node, score: s as f64 })
                .collect::<Vec<_>>()
        }
        GraphOrder::MetricDistance(metric) => {
            let norm = normalize_metrics(t);
            let col = metric.index();
            let mut scored: Vec<RankEntry> = (0..g.node_count())
                .filter(|&v| v != anchor)
                .map(|v| RankEntry {
                    node: v,
                    score: (norm[[anchor, col]] - norm[[v, col]]).abs(),
                })
                .collect();
            scored.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.node.cmp(&b.node)));
            scored
        }
    };
    entries.truncate(k);
    Ok(RankingList {
        anchor,
        space_id: "graph".into(),
        measure: Measure::Graph,
        k,
        entries,
    })
}

fn norm(row: &[f32]) -> f64 {
    row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Cosine similarity in f64; 0 against a zero row.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    dot / (na * nb)
}

pub fn rank_embedding_space(
    e: &EmbeddingMatrix,
    anchor: NodeId,
    measure: Measure,
    k: usize,
) -> Result<RankingList> {
    if anchor >= e.node_count() {
        return Err(Error::InvalidNode {
            index: anchor,
            node_count: e.node_count(),
        });
    }
    check_k(k)?;
    let mut entries: Vec<RankEntry> = match measure {
        Measure::Cosine => {
            let a = e.row(anchor);
            if norm(a) == 0.0 {
                return Err(Error::Numerical(format!(
                    "anchor {anchor} has a zero vector; cosine is undefined"
                )));
            }
            (0..e.node_count())
                .filter(|&v| v != anchor)
                .map(|v| RankEntry {
                    node: v,
                    score: cosine_similarity(a, e.row(v)),
                })
                .collect()
        }
        Measure::Euclidean => (0..e.node_count())
            .filter(|&v| v != anchor)
            .map(|v| RankEntry {
                node: v,
                score: e.distance(anchor, v),
            })
            .collect(),
        Measure::Graph => {
            return Err(Error::invalid("embedding lists use cosine or euclidean"));
        }
    };
    if measure == Measure::Cosine {
        entries.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.node.cmp(&b.node)));
    } else {
        entries.sort_by(|a, b| a.score.total_cmp(&b.score).then(a.node.cmp(&b.node)));
    }
    entries.truncate(k);
    Ok(RankingList {
        anchor,
        space_id: e.model_id.clone(),
        measure,
        k,
        entries,
    })
}

/// `sum (2^g - 1) / log2(i + 1)` over the first `k` grades, `i` from 1.
pub fn dcg(grades: &[u32], k: usize) -> f64 {
    grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k of grades listed in presented order; 0 when no grade is positive.
pub fn ndcg_from_grades(grades: &[u32], k: usize) -> Result<f64> {
    check_k(k)?;
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(grades, k) / idcg)
}

/// Grade `|REL| - position` for the ideal top-k, where `|REL|` is the
/// truncated ideal length.
pub fn relevance_grades(ideal: &RankingList, k: usize) -> HashMap<NodeId, u32> {
    let rel: Vec<NodeId> = ideal.nodes().take(k).collect();
    let n = rel.len() as u32;
    rel.into_iter()
        .enumerate()
        .map(|(i, v)| (v, n - i as u32))
        .collect()
}

pub fn ndcg(presented: &RankingList, ideal: &RankingList, k: usize) -> Result<f64> {
    check_k(k)?;
    let grades = relevance_grades(ideal, k);
    let presented_grades: Vec<u32> = presented
        .nodes()
        .take(k)
        .map(|v| grades.get(&v).copied().unwrap_or(0))
        .collect();
    let mut ideal_grades: Vec<u32> = grades.values().copied().collect();
    ideal_grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal_grades, k);
    if idcg == 0.0 {
        return Ok(0.0);
    }
    Ok(dcg(&presented_grades, k) / idcg)
}

/// Number of lists containing `node`.
pub fn cross_space_presence(lists: &[&RankingList], node: NodeId) -> usize {
    lists.iter().filter(|l| l.contains(node)).count()
}

/// One row of an annotated ranking list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub node: NodeId,
    pub label: String,
    pub score: f64,
    pub shared_friends: usize,
    pub presence: usize,
    /// Normalized metric values keyed by metric name.
    pub metric_bars: BTreeMap<String, f64>,
}

/// A ranking list annotated for display, scored against an ideal list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub anchor: String,
    pub space: String,
    pub measure: Measure,
    pub k: usize,
    pub ndcg: f64,
    pub entries: Vec<RankingRow>,
}

/// Builds the display rows. `presence_lists` are the embedding-space lists
/// counted for each row's presence.
pub fn annotate_ranking(
    g: &Graph,
    normalized: &Array2<f64>,
    list: &RankingList,
    ndcg: f64,
    presence_lists: &[&RankingList],
) -> Result<RankingResult> {
    let entries = list
        .entries
        .iter()
        .map(|e| {
            Ok(RankingRow {
                node: e.node,
                label: g.label(e.node).to_string(),
                score: e.score,
                shared_friends: shared_neighbors(g, list.anchor, e.node)?,
                presence: cross_space_presence(presence_lists, e.node),
                metric_bars: Metric::ALL
                    .iter()
                    .map(|m| (m.key().to_string(), normalized[[e.node, m.index()]]))
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RankingResult {
        anchor: g.label(list.anchor).to_string(),
        space: list.space_id.clone(),
        measure: list.measure,
        k: list.k,
        ndcg,
        entries,
    })
}
