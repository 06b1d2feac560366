//! The per-node metric signature (V1) and community structure.

mod centrality;
mod community;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::graph::{sorted_intersection_count, Graph};

pub use centrality::{betweenness, eigenvector, pagerank};
pub use community::{detect_communities, modularity, CommunityAssignment};

/// The eleven node metrics, in column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Degree,
    Eccentricity,
    Closeness,
    Betweenness,
    Eigenvector,
    Pagerank,
    Clustering,
    Knn,
    Wmd,
    Participation,
    Leverage,
}

impl Metric {
    pub const ALL: [Metric; 11] = [
        Metric::Degree,
        Metric::Eccentricity,
        Metric::Closeness,
        Metric::Betweenness,
        Metric::Eigenvector,
        Metric::Pagerank,
        Metric::Clustering,
        Metric::Knn,
        Metric::Wmd,
        Metric::Participation,
        Metric::Leverage,
    ];

    pub const COUNT: usize = 11;

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short column name used in CSV and JSON.
    pub fn key(self) -> &'static str {
        match self {
            Metric::Degree => "degree",
            Metric::Eccentricity => "eccentricity",
            Metric::Closeness => "closeness",
            Metric::Betweenness => "betweenness",
            Metric::Eigenvector => "eigenvector",
            Metric::Pagerank => "pagerank",
            Metric::Clustering => "clustering",
            Metric::Knn => "knn",
            Metric::Wmd => "wmd",
            Metric::Participation => "participation",
            Metric::Leverage => "leverage",
        }
    }

    /// Human-readable name for report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Metric::Degree => "Degree",
            Metric::Eccentricity => "Eccentricity",
            Metric::Closeness => "Closeness",
            Metric::Betweenness => "Betweenness",
            Metric::Eigenvector => "Eigenvector",
            Metric::Pagerank => "PageRank",
            Metric::Clustering => "Clustering_Coefficient",
            Metric::Knn => "KNN",
            Metric::Wmd => "Within_Module_Degree",
            Metric::Participation => "Participation_Coefficient",
            Metric::Leverage => "Leverage_Centrality",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Metric::ALL
            .into_iter()
            .find(|m| m.key() == lower || m.display_name().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Unknown {
                kind: "metric",
                name: s.to_string(),
            })
    }
}

/// Metric values for one node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub degree: usize,
    pub eccentricity: usize,
    pub closeness: f64,
    pub betweenness: f64,
    pub eigenvector: f64,
    pub pagerank: f64,
    pub clustering: f64,
    pub knn: f64,
    pub wmd: f64,
    pub participation: f64,
    pub leverage: f64,
}

impl NodeMetrics {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Degree => self.degree as f64,
            Metric::Eccentricity => self.eccentricity as f64,
            Metric::Closeness => self.closeness,
            Metric::Betweenness => self.betweenness,
            Metric::Eigenvector => self.eigenvector,
            Metric::Pagerank => self.pagerank,
            Metric::Clustering => self.clustering,
            Metric::Knn => self.knn,
            Metric::Wmd => self.wmd,
            Metric::Participation => self.participation,
            Metric::Leverage => self.leverage,
        }
    }
}

/// V1 signatures for every node of a graph, plus the communities they were computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub labels: Vec<String>,
    pub rows: Vec<NodeMetrics>,
    pub communities: CommunityAssignment,
}

impl MetricsTable {
    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(metric)).collect()
    }

    /// CSV with one row per node: label, community, then the metrics in
    /// column order. Reals carry 17 significant digits so the file round-trips.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label", "community"];
        header.extend(Metric::ALL.iter().map(|m| m.key()));
        w.write_record(&header).expect("in-memory write");
        for (u, (label, row)) in self.labels.iter().zip(&self.rows).enumerate() {
            let mut record = vec![
                label.clone(),
                self.communities.community_of[u].to_string(),
                row.degree.to_string(),
                row.eccentricity.to_string(),
            ];
            record.extend(Metric::ALL[2..].iter().map(|m| format_sig(row.get(*m), 17)));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Parses the output of [`MetricsTable::to_csv`].
    pub fn from_csv(text: &str) -> Result<MetricsTable> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let header = r.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected: Vec<&str> = ["label", "community"]
            .into_iter()
            .chain(Metric::ALL.iter().map(|m| m.key()))
            .collect();
        if header.iter().ne(expected.iter().copied()) {
            return Err(parse_err(1, format!("expected header {}", expected.join(","))));
        }
        let (mut labels, mut rows, mut community) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
            let int = |j: usize| -> Result<usize> {
                rec[j].parse().map_err(|_| parse_err(line, format!("bad integer `{}`", &rec[j])))
            };
            let real = |j: usize| -> Result<f64> {
                rec[j].parse().map_err(|_| parse_err(line, format!("bad number `{}`", &rec[j])))
            };
            labels.push(rec[0].to_string());
            community.push(int(1)?);
            rows.push(NodeMetrics {
                degree: int(2)?,
                eccentricity: int(3)?,
                closeness: real(4)?,
                betweenness: real(5)?,
                eigenvector: real(6)?,
                pagerank: real(7)?,
                clustering: real(8)?,
                knn: real(9)?,
                wmd: real(10)?,
                participation: real(11)?,
                leverage: real(12)?,
            });
        }
        Ok(MetricsTable {
            labels,
            rows,
            communities: CommunityAssignment::from_labels(&community),
        })
    }
}

const ITERATIVE_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;
pub const PAGERANK_DAMPING: f64 = 0.85;

/// Computes all eleven metrics. The graph must be connected.
pub fn compute_metrics(g: &Graph, communities: &CommunityAssignment) -> Result<MetricsTable> {
    g.require_connected()?;
    communities.check(g)?;
    let n = g.node_count();
    let degrees = g.degrees();

    let mut eccentricity = vec![0usize; n];
    let mut closeness = vec![0.0; n];
    for s in 0..n {
        let dist = g.bfs_distances(s);
        eccentricity[s] = dist.iter().copied().max().unwrap_or(0);
        let total: usize = dist.iter().sum();
        closeness[s] = if total == 0 {
            0.0
        } else {
            (n - 1) as f64 / total as f64
        };
    }
    let betweenness = betweenness(g);
    let eigen = eigenvector(g, ITERATIVE_TOLERANCE, MAX_ITERATIONS);
    let pagerank = pagerank(g, PAGERANK_DAMPING, ITERATIVE_TOLERANCE, MAX_ITERATIONS);

    // within-community degree and its per-community mean and population std
    let comm = &communities.community_of;
    let internal: Vec<usize> = (0..n)
        .map(|u| g.neighbors(u).iter().filter(|&&v| comm[v] == comm[u]).count())
        .collect();
    let k = communities.community_count;
    let mut sum = vec![0.0; k];
    let mut sum_sq = vec![0.0; k];
    let mut size = vec![0usize; k];
    for u in 0..n {
        let x = internal[u] as f64;
        sum[comm[u]] += x;
        sum_sq[comm[u]] += x * x;
        size[comm[u]] += 1;
    }

    let mut per_comm = vec![0usize; k];
    let rows = (0..n)
        .map(|u| {
            let ku = degrees[u];
            let kf = ku as f64;
            let neighbors = g.neighbors(u);

            let clustering = if ku < 2 {
                0.0
            } else {
                let links: usize = neighbors
                    .iter()
                    .map(|&v| sorted_intersection_count(neighbors, g.neighbors(v), |_| true))
                    .sum();
                // each link among neighbors was found from both ends
                links as f64 / (kf * (kf - 1.0))
            };

            let (knn, leverage) = if ku == 0 {
                (0.0, 0.0)
            } else {
                let knn = neighbors.iter().map(|&v| degrees[v] as f64).sum::<f64>() / kf;
                let lev = neighbors
                    .iter()
                    .map(|&v| {
                        let kv = degrees[v] as f64;
                        (kf - kv) / (kf + kv)
                    })
                    .sum::<f64>()
                    / kf;
                (knn, lev)
            };

            let c = comm[u];
            let m = size[c] as f64;
            let mean = sum[c] / m;
            let var = (sum_sq[c] / m - mean * mean).max(0.0);
            let std = var.sqrt();
            let wmd = if std <= 1e-12 * mean.abs().max(1.0) {
                0.0
            } else {
                (internal[u] as f64 - mean) / std
            };

            let participation = if ku == 0 {
                0.0
            } else {
                per_comm.fill(0);
                for &v in neighbors {
                    per_comm[comm[v]] += 1;
                }
                1.0 - per_comm
                    .iter()
                    .map(|&c| (c as f64 / kf).powi(2))
                    .sum::<f64>()
            };

            NodeMetrics {
                degree: ku,
                eccentricity: eccentricity[u],
                closeness: closeness[u],
                betweenness: betweenness[u],
                eigenvector: eigen[u],
                pagerank: pagerank[u],
                clustering,
                knn,
                wmd,
                participation,
                leverage,
            }
        })
        .collect();

    Ok(MetricsTable {
        labels: g.labels().to_vec(),
        rows,
        communities: communities.clone(),
    })
}

/// Min-max scales each metric column to `[0, 1]`; constant columns become 0.
pub fn normalize_metrics(t: &MetricsTable) -> Array2<f64> {
    let n = t.node_count();
    let mut out = Array2::zeros((n, Metric::COUNT));
    for m in Metric::ALL {
        let col = t.column(m);
        let normalized = min_max(&col);
        for (i, v) in normalized.into_iter().enumerate() {
            out[[i, m.index()]] = v;
        }
    }
    out
}

/// Min-max scaling of one column.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / range).collect()
}
