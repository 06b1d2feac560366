//! Regression of embedding-space pair distances on per-metric pair distances.
//!
//! Each row of a [`PairwiseDataset`] is an unordered node pair; the features
//! are absolute differences of the min-max normalized metrics and the target
//! is the Euclidean distance between the two embedding rows. A decision tree,
//! OLS and lasso are fitted on an 80/20 split, and the tree's feature
//! importances weighted by its test R² feed the cross-dataset ranking.

mod linear;
mod tree;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::{normalize_metrics, Metric, MetricsTable};

pub use linear::{fit_lasso, fit_ols, LinearModel, LASSO_TOLERANCE, RIDGE_JITTER};
pub use tree::{RegressionTree, TreeNode, TreeParams};

/// Models whose tree R² does not exceed this are left out of the ranking.
pub const R2_GATE: f64 = 0.70;
pub const DEFAULT_MAX_PAIRS: usize = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    All,
    Capped { max_pairs: usize, seed: u64 },
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::Capped {
            max_pairs: DEFAULT_MAX_PAIRS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairwiseDataset {
    /// P × 11, column order of [`Metric::ALL`].
    pub features: Array2<f64>,
    pub target: Vec<f64>,
    pub pairs: Vec<(u32, u32)>,
}

impl PairwiseDataset {
    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    /// Row subset in the given order.
    pub fn select(&self, rows: &[usize]) -> PairwiseDataset {
        PairwiseDataset {
            features: self.features.select(Axis(0), rows),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            pairs: rows.iter().map(|&r| self.pairs[r]).collect(),
        }
    }
}

/// Maps a linear index over the strict upper triangle to its `(u, v)` pair.
fn decode_pair(index: usize, n: usize) -> (usize, usize) {
    // offset(u) = u*n - u(u+1)/2 = number of pairs whose first element is < u
    let offset = |u: usize| u * n - u * (u + 1) / 2;
    let (mut lo, mut hi) = (0, n - 1);
    while lo + 1 < hi {
        let mid = (lo + hi) / 2;
        if offset(mid) <= index {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = if offset(hi) <= index { hi } else { lo };
    (u, u + 1 + index - offset(u))
}

pub fn build_pairwise_dataset(
    t: &MetricsTable,
    e: &EmbeddingMatrix,
    sampling: Sampling,
) -> Result<PairwiseDataset> {
    let n = t.node_count();
    if e.node_count() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: e.node_count(),
        });
    }
    if t.labels != e.labels {
        return Err(Error::invalid("metrics and embedding rows are not aligned"));
    }
    if n < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    let total = n * (n - 1) / 2;
    let pairs: Vec<(u32, u32)> = match sampling {
        Sampling::Capped { max_pairs, seed } if max_pairs < total => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = sample(&mut rng, total, max_pairs).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .map(|k| {
                    let (u, v) = decode_pair(k, n);
                    (u as u32, v as u32)
                })
                .collect()
        }
        _ => (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u as u32, v as u32)))
            .collect(),
    };
    let v1 = normalize_metrics(t);
    let mut features = Array2::zeros((pairs.len(), Metric::COUNT));
    let mut target = Vec::with_capacity(pairs.len());
    for (row, &(u, v)) in pairs.iter().enumerate() {
        let (u, v) = (u as usize, v as usize);
        for m in 0..Metric::COUNT {
            features[[row, m]] = (v1[[u, m]] - v1[[v, m]]).abs();
        }
        target.push(e.distance(u, v));
    }
    if target.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite embedding distance".into()));
    }
    Ok(PairwiseDataset {
        features,
        target,
        pairs,
    })
}

/// Coefficient of determination; 0 when the targets have no variance.
pub fn r2_score(truth: &[f64], predicted: &[f64]) -> f64 {
    let n = truth.len() as f64;
    if truth.is_empty() {
        return 0.0;
    }
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return 0.0;
    }
    let ss_res: f64 = truth
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).powi(2))
        .sum();
    1.0 - ss_res / ss_tot
}

/// Seeded train/test partition of row indices.
pub fn train_test_split(rows: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = ((rows as f64) * train_fraction).round() as usize;
    let test = idx.split_off(cut.min(rows));
    (idx, test)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressor {
    DecisionTree,
    Ols,
    Lasso,
}

impl Regressor {
    pub fn as_str(self) -> &'static str {
        match self {
            Regressor::DecisionTree => "decision_tree",
            Regressor::Ols => "ols",
            Regressor::Lasso => "lasso",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionOptions {
    pub train_fraction: f64,
    pub seed: u64,
    pub tree: TreeParams,
    pub lasso_lambda: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        RegressionOptions {
            train_fraction: 0.8,
            seed: 0,
            tree: TreeParams::default(),
            lasso_lambda: 1e-3,
        }
    }
}

/// One fitted regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorScore {
    pub regressor: Regressor,
    pub r2_train: f64,
    pub r2_test: f64,
    /// Per-metric importances (decision tree only).
    pub importances: Option<Vec<f64>>,
    /// Per-metric coefficients (linear models only).
    pub coefficients: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub model_id: String,
    pub dataset: String,
    pub entries: Vec<RegressorScore>,
    /// Tree importance × tree test R², per metric.
    pub weighted_importances: Vec<f64>,
    /// Whether the tree's test R² clears [`R2_GATE`].
    pub selected: bool,
}

fn split_xy(d: &PairwiseDataset, rows: &[usize]) -> (Array2<f64>, Vec<f64>) {
    (
        d.features.select(Axis(0), rows),
        rows.iter().map(|&r| d.target[r]).collect(),
    )
}

fn require_variance(y: &[f64]) -> bool {
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    y.iter().any(|v| (v - mean).abs() > 0.0)
}

/// Fits a CART tree on the training split and scores both splits.
pub fn fit_decision_tree(d: &PairwiseDataset, opts: &RegressionOptions) -> Result<RegressorScore> {
    let (train, test) = train_test_split(d.len(), opts.train_fraction, opts.seed);
    let (xt, yt) = split_xy(d, &train);
    let (xs, ys) = split_xy(d, &test);
    if yt.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    if !require_variance(&yt) {
        return Ok(RegressorScore {
            regressor: Regressor::DecisionTree,
            r2_train: 0.0,
            r2_test: 0.0,
            importances: Some(vec![0.0; d.features.ncols()]),
            coefficients: None,
        });
    }
    let tree = RegressionTree::fit(xt.view(), &yt, &opts.tree);
    Ok(RegressorScore {
        regressor: Regressor::DecisionTree,
        r2_train: r2_score(&yt, &tree.predict(xt.view())),
        r2_test: r2_score(&ys, &tree.predict(xs.view())),
        importances: Some(tree.importances),
        coefficients: None,
    })
}

/// Fits OLS (`lasso_lambda = None`) or lasso on the training split.
pub fn fit_linear(
    d: &PairwiseDataset,
    lasso_lambda: Option<f64>,
    opts: &RegressionOptions,
) -> Result<RegressorScore> {
    let (train, test) = train_test_split(d.len(), opts.train_fraction, opts.seed);
    let (xt, yt) = split_xy(d, &train);
    let (xs, ys) = split_xy(d, &test);
    let regressor = if lasso_lambda.is_some() {
        Regressor::Lasso
    } else {
        Regressor::Ols
    };
    if yt.is_empty() {
        return Err(Error::invalid("empty training split"));
    }
    if !require_variance(&yt) {
        return Ok(RegressorScore {
            regressor,
            r2_train: 0.0,
            r2_test: 0.0,
            importances: None,
            coefficients: Some(vec![0.0; d.features.ncols()]),
        });
    }
    let model = match lasso_lambda {
        Some(l) => fit_lasso(xt.view(), &yt, l)?,
        None => fit_ols(xt.view(), &yt)?,
    };
    Ok(RegressorScore {
        regressor,
        r2_train: r2_score(&yt, &model.predict(xt.view())),
        r2_test: r2_score(&ys, &model.predict(xs.view())),
        importances: None,
        coefficients: Some(model.coefficients),
    })
}

/// Fits all three regressors and derives the weighted importances.
pub fn regression_report(
    model_id: &str,
    dataset: &str,
    d: &PairwiseDataset,
    opts: &RegressionOptions,
) -> Result<RegressionReport> {
    let tree = fit_decision_tree(d, opts)?;
    let ols = fit_linear(d, None, opts)?;
    let lasso = fit_linear(d, Some(opts.lasso_lambda), opts)?;
    let r2 = tree.r2_test;
    let weighted_importances = tree
        .importances
        .as_ref()
        .expect("tree reports importances")
        .iter()
        .map(|v| v * r2)
        .collect();
    Ok(RegressionReport {
        model_id: model_id.to_string(),
        dataset: dataset.to_string(),
        selected: r2 > R2_GATE,
        weighted_importances,
        entries: vec![tree, ols, lasso],
    })
}

impl RegressionReport {
    pub fn entry(&self, regressor: Regressor) -> Option<&RegressorScore> {
        self.entries.iter().find(|e| e.regressor == regressor)
    }

    /// Metric with the largest weighted importance (lowest index on ties).
    pub fn top_metric(&self) -> Metric {
        let mut best = 0;
        for (i, &v) in self.weighted_importances.iter().enumerate() {
            if v > self.weighted_importances[best] {
                best = i;
            }
        }
        Metric::ALL[best]
    }

    /// Flat per-regressor records for JSON export.
    pub fn records(&self) -> Vec<serde_json::Value> {
        let as_map = |values: &[f64]| -> BTreeMap<&'static str, f64> {
            Metric::ALL.iter().map(|m| m.key()).zip(values.iter().copied()).collect()
        };
        self.entries
            .iter()
            .map(|e| {
                let mut record = serde_json::json!({
                    "model_id": self.model_id,
                    "dataset": self.dataset,
                    "regressor": e.regressor.as_str(),
                    "r2_train": e.r2_train,
                    "r2_test": e.r2_test,
                    "importances": e.importances.as_deref().map(as_map).unwrap_or_default(),
                    "weighted": if e.regressor == Regressor::DecisionTree {
                        as_map(&self.weighted_importances)
                    } else {
                        BTreeMap::new()
                    },
                });
                if let Some(c) = &e.coefficients {
                    record["coefficients"] = serde_json::json!(as_map(c));
                }
                record
            })
            .collect()
    }
}

/// Ranked metrics for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRanking {
    pub model_id: String,
    /// `None` when every report was gated out.
    pub scores: Option<Vec<f64>>,
    /// Metrics in descending score order.
    pub ranked: Vec<Metric>,
    /// Metrics scoring above the median of all metric scores.
    pub above_median: Vec<Metric>,
}

/// Table of averaged weighted importances, models × metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub models: Vec<ModelRanking>,
    /// Union of every ranked model's above-median metrics.
    pub metrics: Vec<Metric>,
}

/// Gates reports on tree R², averages weighted importances across datasets
/// per model, ranks the metrics and keeps those above the median score.
pub fn rank_features(reports: &[RegressionReport]) -> FeatureTable {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.model_id.as_str()) {
            order.push(&r.model_id);
        }
    }
    let mut models = Vec::new();
    for model in order {
        let kept: Vec<&RegressionReport> = reports
            .iter()
            .filter(|r| r.model_id == model && r.selected)
            .collect();
        if kept.is_empty() {
            models.push(ModelRanking {
                model_id: model.to_string(),
                scores: None,
                ranked: Vec::new(),
                above_median: Vec::new(),
            });
            continue;
        }
        let mut scores = vec![0.0; Metric::COUNT];
        for r in &kept {
            for (s, w) in scores.iter_mut().zip(&r.weighted_importances) {
                *s += w / kept.len() as f64;
            }
        }
        let mut ranked = Metric::ALL.to_vec();
        ranked.sort_by(|a, b| scores[b.index()].total_cmp(&scores[a.index()]).then(a.cmp(b)));
        let median = median(&scores);
        let above_median = ranked
            .iter()
            .copied()
            .filter(|m| scores[m.index()] > median)
            .collect();
        models.push(ModelRanking {
            model_id: model.to_string(),
            scores: Some(scores),
            ranked,
            above_median,
        });
    }
    let mut metrics: Vec<Metric> = models
        .iter()
        .flat_map(|m| m.above_median.iter().copied())
        .collect();
    metrics.sort();
    metrics.dedup();
    // rows in ascending order of mean score, as in the classic table layout
    let mean_score = |m: Metric| -> f64 {
        let ranked: Vec<&Vec<f64>> = models.iter().filter_map(|r| r.scores.as_ref()).collect();
        ranked.iter().map(|s| s[m.index()]).sum::<f64>() / ranked.len().max(1) as f64
    };
    metrics.sort_by(|&a, &b| mean_score(a).total_cmp(&mean_score(b)).then(a.cmp(&b)));
    FeatureTable { models, metrics }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl FeatureTable {
    /// Metrics × models CSV of percentages; unranked models are left blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for m in &self.models {
            out.push(',');
            out.push_str(&m.model_id);
        }
        out.push('\n');
        for metric in &self.metrics {
            out.push_str(metric.display_name());
            for m in &self.models {
                out.push(',');
                if let Some(s) = &m.scores {
                    let _ = write!(out, "{:.2}", 100.0 * s[metric.index()]);
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_decoding_covers_triangle() {
        for n in 2..12 {
            let mut k = 0;
            for u in 0..n {
                for v in u + 1..n {
                    assert_eq!(decode_pair(k, n), (u, v));
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn r2_conventions() {
        assert_eq!(r2_score(&[1.0, 1.0, 1.0], &[0.0, 5.0, 1.0]), 0.0);
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert!(r2_score(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) < 0.0);
    }

    #[test]
    fn split_is_eighty_twenty_and_seeded() {
        let (a, b) = train_test_split(100, 0.8, 4);
        assert_eq!((a.len(), b.len()), (80, 20));
        assert_eq!(train_test_split(100, 0.8, 4), (a.clone(), b));
        let mut all = a;
        all.extend(train_test_split(100, 0.8, 4).1);
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    fn report(model: &str, r2: f64, importances: [f64; 11]) -> RegressionReport {
        RegressionReport {
            model_id: model.into(),
            dataset: "d".into(),
            entries: vec![],
            weighted_importances: importances.iter().map(|v| v * r2).collect(),
            selected: r2 > R2_GATE,
        }
    }

    #[test]
    fn single_report_single_metric() {
        let mut imp = [0.0; 11];
        imp[Metric::Degree.index()] = 1.0;
        let table = rank_features(&[report("m", 0.9, imp)]);
        let m = &table.models[0];
        assert_eq!(m.ranked[0], Metric::Degree);
        assert!((m.scores.as_ref().unwrap()[0] - 0.9).abs() < 1e-15);
        assert_eq!(m.above_median, vec![Metric::Degree]);
        assert_eq!(table.metrics, vec![Metric::Degree]);
    }

    #[test]
    fn gated_models_are_unranked() {
        let table = rank_features(&[report("weak", 0.5, [1.0 / 11.0; 11])]);
        assert!(table.models[0].scores.is_none());
        assert!(table.metrics.is_empty());
        assert_eq!(table.to_csv(), "metric,weak\n");
    }

    #[test]
    fn averages_across_datasets() {
        let mut a = [0.0; 11];
        a[0] = 1.0;
        let mut b = [0.0; 11];
        b[1] = 1.0;
        let table = rank_features(&[report("m", 1.0, a), report("m", 0.8, b), report("m", 0.1, b)]);
        let s = table.models[0].scores.as_ref().unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert!((s[1] - 0.4).abs() < 1e-15);
    }
}
