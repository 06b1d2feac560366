//! Ego-network signatures, Canberra k-means and per-cluster distance profiles.
//!
//! Each focal node gets a seven-value signature of its one-hop neighborhood.
//! Signatures are clustered with k-means under the Canberra distance, and each
//! cluster is summarized by the ragged mean of its members' sorted
//! focal-to-neighbor embedding distances.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

pub const EGO_FEATURE_COUNT: usize = 7;
pub const EGO_FEATURE_NAMES: [&str; EGO_FEATURE_COUNT] = [
    "degree",
    "edges_num",
    "density",
    "twoalter_num",
    "average_alter_alter_num",
    "average_degree",
    "clustering_coefficient",
];
pub const KMEANS_MAX_ITERATIONS: usize = 100;

/// One-hop neighborhood signature of a focal node. All values are zero for an
/// isolated node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoFeatures {
    /// Number of alters.
    pub degree: f64,
    /// Edges among alters.
    pub edges_num: f64,
    /// `edges_num / (n(n-1)/2)`; 0 with fewer than two alters.
    pub density: f64,
    /// Nodes two steps away that are neither the focal node nor an alter.
    pub twoalter_num: f64,
    /// Mean degree of the alters.
    pub average_alter_alter_num: f64,
    /// Mean degree over the focal node and its alters.
    pub average_degree: f64,
    /// `2 * edges_num / (k(k-1))`; 0 with fewer than two alters.
    pub clustering_coefficient: f64,
}

impl EgoFeatures {
    pub fn to_array(&self) -> [f64; EGO_FEATURE_COUNT] {
        [
            self.degree,
            self.edges_num,
            self.density,
            self.twoalter_num,
            self.average_alter_alter_num,
            self.average_degree,
            self.clustering_coefficient,
        ]
    }
}

pub fn compute_ego_features(g: &Graph) -> Vec<EgoFeatures> {
    let n = g.node_count();
    // stamp[w] == focal + 1 marks the closed neighborhood, seen[w] the 2-step set
    let mut stamp = vec![0usize; n];
    let mut seen = vec![0usize; n];
    let mut out = Vec::with_capacity(n);
    for u in 0..n {
        let alters = g.neighbors(u);
        let k = alters.len();
        if k == 0 {
            out.push(EgoFeatures::default());
            continue;
        }
        let tag = u + 1;
        stamp[u] = tag;
        for &v in alters {
            stamp[v] = tag;
        }
        let mut among = 0usize;
        let mut two = 0usize;
        let mut alter_degree_sum = 0usize;
        for &v in alters {
            alter_degree_sum += g.degree(v);
            for &w in g.neighbors(v) {
                if stamp[w] == tag {
                    if w != u && w > v {
                        among += 1;
                    }
                } else if seen[w] != tag {
                    seen[w] = tag;
                    two += 1;
                }
            }
        }
        let kf = k as f64;
        let pairs = kf * (kf - 1.0) / 2.0;
        let ratio = if k > 1 { among as f64 / pairs } else { 0.0 };
        out.push(EgoFeatures {
            degree: kf,
            edges_num: among as f64,
            density: ratio,
            twoalter_num: two as f64,
            average_alter_alter_num: alter_degree_sum as f64 / kf,
            average_degree: (alter_degree_sum + k) as f64 / (kf + 1.0),
            clustering_coefficient: ratio,
        });
    }
    out
}

/// Stacks signatures into an n × 7 matrix.
pub fn ego_matrix(features: &[EgoFeatures]) -> Array2<f64> {
    let mut m = Array2::zeros((features.len(), EGO_FEATURE_COUNT));
    for (i, f) in features.iter().enumerate() {
        for (j, v) in f.to_array().into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

#[inline]
fn canberra_term(a: f64, b: f64) -> f64 {
    let den = a.abs() + b.abs();
    if den == 0.0 {
        0.0
    } else {
        (a - b).abs() / den
    }
}

/// `sum |u_i - v_i| / (|u_i| + |v_i|)` with `0/0 = 0`.
pub fn canberra(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(canberra_view(u.iter(), v.iter()))
}

fn canberra_view<'a>(u: impl Iterator<Item = &'a f64>, v: impl Iterator<Item = &'a f64>) -> f64 {
    u.zip(v).map(|(&a, &b)| canberra_term(a, b)).sum()
}

fn row_distance(x: ArrayView1<f64>, c: ArrayView1<f64>) -> f64 {
    canberra_view(x.iter(), c.iter())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoClustering {
    pub k: usize,
    pub assignment: Vec<usize>,
    /// k × d.
    pub centroids: Array2<f64>,
    /// Total Canberra distortion after the last assignment step.
    pub objective: f64,
    /// Objective after every assignment step, in order.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

fn farthest_point_init(x: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = x.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut taken = vec![false; n];
    taken[chosen[0]] = true;
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| row_distance(x.row(i), x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let pick = best.expect("k <= n leaves an untaken point");
        taken[pick] = true;
        chosen.push(pick);
        for i in 0..n {
            nearest[i] = nearest[i].min(row_distance(x.row(i), x.row(pick)));
        }
    }
    chosen
}

/// Nearest centroid per row (lowest index on ties) and the distortion.
fn assign(x: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut labels = Vec::with_capacity(x.nrows());
    let mut dist = Vec::with_capacity(x.nrows());
    for row in x.rows() {
        let mut best = (0, f64::INFINITY);
        for (c, centroid) in centroids.rows().into_iter().enumerate() {
            let d = row_distance(row, centroid);
            if d < best.1 {
                best = (c, d);
            }
        }
        labels.push(best.0);
        dist.push(best.1);
    }
    (labels, dist)
}

/// Moves each empty cluster's centroid onto the worst-fitting point that can
/// leave a cluster of at least two members.
fn reseed_empty(
    x: ArrayView2<f64>,
    centroids: &mut Array2<f64>,
    labels: &mut [usize],
    dist: &mut [f64],
) {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut best: Option<usize> = None;
        for i in 0..labels.len() {
            if sizes[labels[i]] >= 2 && best.is_none_or(|b| dist[i] > dist[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { continue };
        log::debug!("re-seeding empty cluster {c} with row {i}");
        sizes[labels[i]] -= 1;
        sizes[c] = 1;
        labels[i] = c;
        dist[i] = 0.0;
        centroids.row_mut(c).assign(&x.row(i));
    }
}

/// Component-wise mean per cluster, kept only where it does not raise that
/// component's Canberra sum, so the objective can never increase.
fn update_centroids(x: ArrayView2<f64>, centroids: &mut Array2<f64>, labels: &[usize]) {
    let (k, d) = centroids.dim();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    for c in 0..k {
        if members[c].is_empty() {
            continue;
        }
        for j in 0..d {
            let mean = members[c].iter().map(|&i| x[[i, j]]).sum::<f64>() / members[c].len() as f64;
            let current = centroids[[c, j]];
            let cost = |z: f64| members[c].iter().map(|&i| canberra_term(x[[i, j]], z)).sum::<f64>();
            if cost(mean) <= cost(current) {
                centroids[[c, j]] = mean;
            }
        }
    }
}

/// k-means with the Canberra distance and seeded farthest-point starts.
pub fn kmeans_canberra(x: ArrayView2<f64>, k: usize, seed: u64) -> Result<EgoClustering> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k must be in 1..={n}, got {k}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite feature value".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = farthest_point_init(x, k, &mut rng);
    let mut centroids = Array2::zeros((k, x.ncols()));
    for (c, &i) in starts.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(i));
    }
    let (mut labels, mut dist) = assign(x, &centroids);
    reseed_empty(x, &mut centroids, &mut labels, &mut dist);
    let mut history = vec![dist.iter().sum::<f64>()];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITERATIONS {
        iterations += 1;
        update_centroids(x, &mut centroids, &labels);
        let (mut next, mut next_dist) = assign(x, &centroids);
        reseed_empty(x, &mut centroids, &mut next, &mut next_dist);
        history.push(next_dist.iter().sum());
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
    }
    Ok(EgoClustering {
        k,
        assignment: labels,
        centroids,
        objective: *history.last().expect("history is non-empty"),
        objective_history: history,
        iterations,
    })
}

/// Adjusted Rand index between two labelings; 1 when both are trivial.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![0u64; ka * kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
    }
    let choose2 = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.iter().map(|&v| choose2(v)).sum();
    let rows: f64 = (0..ka).map(|i| choose2(table[i * kb..(i + 1) * kb].iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| choose2((0..ka).map(|i| table[i * kb + j]).sum())).sum();
    let total = choose2(a.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = rows * cols / total;
    let max = (rows + cols) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Euclidean embedding distances from `focal` to each neighbor, ascending.
pub fn distance_vector(g: &Graph, e: &EmbeddingMatrix, focal: NodeId) -> Result<Vec<f64>> {
    g.check_node(focal)?;
    if e.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            found: e.node_count(),
        });
    }
    let mut d: Vec<f64> = g.neighbors(focal).iter().map(|&v| e.distance(focal, v)).collect();
    d.sort_by(f64::total_cmp);
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageDistanceVector {
    pub values: Vec<f64>,
    /// Number of member vectors long enough to reach each position.
    pub supports: Vec<usize>,
}

/// Position-wise mean over vectors of unequal length; shorter vectors simply
/// stop contributing.
pub fn average_distance_vector(vectors: &[Vec<f64>]) -> AverageDistanceVector {
    let len = vectors.iter().map(Vec::len).max().unwrap_or(0);
    let mut sums = vec![0.0; len];
    let mut supports = vec![0usize; len];
    for v in vectors {
        for (j, &x) in v.iter().enumerate() {
            sums[j] += x;
            supports[j] += 1;
        }
    }
    let values = sums
        .iter()
        .zip(&supports)
        .map(|(s, &c)| s / c as f64)
        .collect();
    AverageDistanceVector { values, supports }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: usize,
    /// Member node labels in node order.
    pub members: Vec<String>,
    pub centroid: Vec<f64>,
    pub average_distance_vector: Vec<f64>,
    pub supports: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub k: usize,
    pub model_id: String,
    pub objective: f64,
    pub clusters: Vec<ClusterSummary>,
}

/// Clusters the ego signatures of `g` and profiles every cluster in `e`.
pub fn analyze_structure(g: &Graph, e: &EmbeddingMatrix, k: usize, seed: u64) -> Result<StructureReport> {
    let features = compute_ego_features(g);
    let clustering = kmeans_canberra(ego_matrix(&features).view(), k, seed)?;
    summarize_clusters(g, e, &clustering)
}

pub fn summarize_clusters(g: &Graph, e: &EmbeddingMatrix, clustering: &EgoClustering) -> Result<StructureReport> {
    let mut clusters = Vec::with_capacity(clustering.k);
    for c in 0..clustering.k {
        let nodes: Vec<NodeId> = (0..g.node_count())
            .filter(|&u| clustering.assignment[u] == c)
            .collect();
        let vectors = nodes
            .iter()
            .map(|&u| distance_vector(g, e, u))
            .collect::<Result<Vec<_>>>()?;
        let avg = average_distance_vector(&vectors);
        clusters.push(ClusterSummary {
            id: c,
            members: nodes.iter().map(|&u| g.label(u).to_string()).collect(),
            centroid: clustering.centroids.row(c).to_vec(),
            average_distance_vector: avg.values,
            supports: avg.supports,
        });
    }
    Ok(StructureReport {
        k: clustering.k,
        model_id: e.model_id.clone(),
        objective: clustering.objective,
        clusters,
    })
}
