//! Random-walk embeddings: DeepWalk, node2vec and struc2vec corpora feeding a
//! shared skip-gram trainer.

mod alias;
mod skipgram;
mod struc2vec;
mod walks;

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::graph::Graph;

pub use alias::AliasTable;
pub use skipgram::{train_skipgram, EpochStats, SkipGramModel, SkipGramTrainer};
pub use struc2vec::{
    build_struc2vec_layers, cumulative_distances, dtw, ring_degree_sequences,
    structural_distance, walks_struc2vec, MultilayerGraph,
};
pub use walks::{node2vec_bias, walks_node2vec, walks_uniform, Corpus, Node2vecSampler};

/// Walk and skip-gram hyperparameters shared by all three models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub dimension: usize,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    pub initial_learning_rate: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            dimension: 128,
            epochs: 5,
            negatives_per_positive: 5,
            initial_learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("dimension", self.dimension),
            ("epochs", self.epochs),
            ("negatives_per_positive", self.negatives_per_positive),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.initial_learning_rate > 0.0 && self.initial_learning_rate.is_finite()) {
            return Err(Error::invalid("initial_learning_rate must be positive"));
        }
        Ok(())
    }
}

/// node2vec return (`p`) and in-out (`q`) parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node2vecParams {
    pub p: f64,
    pub q: f64,
}

impl Node2vecParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("node2vec {name} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// struc2vec hierarchy depth and layer-transition behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Struc2vecConfig {
    /// Number of layers (ring depths `0..layers`).
    pub layers: usize,
    /// Probability that a walk step stays in the current layer.
    pub stay_probability: f64,
    /// Candidate partners per node; `None` means `ceil(log2 n)`.
    pub candidates: Option<usize>,
}

impl Default for Struc2vecConfig {
    fn default() -> Self {
        Struc2vecConfig {
            layers: 5,
            stay_probability: 0.3,
            candidates: None,
        }
    }
}

impl Struc2vecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::invalid("struc2vec needs at least one layer"));
        }
        if !(self.stay_probability > 0.0 && self.stay_probability <= 1.0) {
            return Err(Error::invalid("stay_probability must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Deepwalk,
    Node2vec,
    Struc2vec,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Deepwalk => "deepwalk",
            ModelKind::Node2vec => "node2vec",
            ModelKind::Struc2vec => "struc2vec",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "deepwalk" => Ok(ModelKind::Deepwalk),
            "node2vec" => Ok(ModelKind::Node2vec),
            "struc2vec" => Ok(ModelKind::Struc2vec),
            _ => Err(Error::Unknown {
                kind: "model",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A model together with its model-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node2vec: Option<Node2vecParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub struc2vec: Option<Struc2vecConfig>,
}

impl ModelSpec {
    pub fn deepwalk() -> Self {
        ModelSpec {
            kind: ModelKind::Deepwalk,
            node2vec: None,
            struc2vec: None,
        }
    }

    pub fn node2vec(p: f64, q: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Node2vec,
            node2vec: Some(Node2vecParams { p, q }),
            struc2vec: None,
        }
    }

    pub fn struc2vec() -> Self {
        ModelSpec {
            kind: ModelKind::Struc2vec,
            node2vec: None,
            struc2vec: Some(Struc2vecConfig::default()),
        }
    }

    /// Parses a model id; node2vec parameters are required for node2vec and rejected otherwise.
    pub fn parse(model: &str, node2vec: Option<Node2vecParams>) -> Result<Self> {
        let kind: ModelKind = model.parse()?;
        let spec = ModelSpec {
            kind,
            node2vec,
            struc2vec: (kind == ModelKind::Struc2vec).then(Struc2vecConfig::default),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, &self.node2vec) {
            (ModelKind::Node2vec, None) => {
                return Err(Error::invalid("node2vec requires p and q"));
            }
            (ModelKind::Node2vec, Some(p)) => p.validate()?,
            (_, Some(_)) => {
                return Err(Error::invalid(format!("{} takes no p/q parameters", self.kind)));
            }
            _ => {}
        }
        if let Some(s) = &self.struc2vec {
            if self.kind != ModelKind::Struc2vec {
                return Err(Error::invalid("struc2vec settings given for another model"));
            }
            s.validate()?;
        }
        Ok(())
    }

    /// Identifier of the embedding space, e.g. `node2vec_p256_q0.004`.
    pub fn space_id(&self) -> String {
        match (self.kind, &self.node2vec) {
            (ModelKind::Node2vec, Some(p)) => format!(
                "node2vec_p{}_q{}",
                format_sig(p.p, 9),
                format_sig(p.q, 9)
            ),
            (kind, _) => kind.as_str().to_string(),
        }
    }

    /// Inverse of [`ModelSpec::space_id`].
    pub fn from_space_id(id: &str) -> Result<Self> {
        if let Some(rest) = id.strip_prefix("node2vec_p") {
            let (p, q) = rest.split_once("_q").ok_or_else(|| Error::Unknown {
                kind: "space",
                name: id.to_string(),
            })?;
            let parse = |s: &str| {
                s.parse::<f64>().map_err(|_| Error::Unknown {
                    kind: "space",
                    name: id.to_string(),
                })
            };
            let spec = ModelSpec::node2vec(parse(p)?, parse(q)?);
            spec.validate()?;
            return Ok(spec);
        }
        ModelSpec::parse(id, None)
    }
}

/// Embedding vectors aligned to a graph's node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub model_id: String,
    pub config_hash: String,
    pub labels: Vec<String>,
    pub vectors: Array2<f32>,
}

impl EmbeddingMatrix {
    pub fn node_count(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, node: usize) -> &[f32] {
        let d = self.dimension();
        &self.vectors.as_slice().expect("standard layout")[node * d..(node + 1) * d]
    }

    /// Euclidean distance between two rows, accumulated in f64.
    pub fn distance(&self, u: usize, v: usize) -> f64 {
        self.row(u)
            .iter()
            .zip(self.row(v))
            .map(|(a, b)| {
                let d = (*a as f64) - (*b as f64);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Serializes in word2vec text format with 9 significant digits.
    pub fn to_word2vec(&self) -> String {
        let (n, d) = self.vectors.dim();
        let mut out = String::with_capacity(n * d * 14 + 16);
        let _ = writeln!(out, "{n} {d}");
        for (label, row) in self.labels.iter().zip(self.vectors.rows()) {
            out.push_str(label);
            for &v in row {
                out.push(' ');
                out.push_str(&format_sig(v as f64, 9));
            }
            out.push('\n');
        }
        out
    }

    /// Parses word2vec text; model metadata is left empty.
    pub fn from_word2vec(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut head = header.split_whitespace();
        let parse_usize = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok()).ok_or(Error::Parse {
                line: 1,
                message: "header must be `<N> <d>`".into(),
            })
        };
        let n = parse_usize(head.next())?;
        let d = parse_usize(head.next())?;
        let mut labels = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for (lineno, line) in lines {
            let mut tokens = line.split_whitespace();
            let label = tokens.next().expect("line is non-empty");
            let before = data.len();
            for tok in tokens {
                let v: f32 = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("bad number `{tok}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        message: "non-finite value".into(),
                    });
                }
                data.push(v);
            }
            if data.len() - before != d {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {d} values, found {}", data.len() - before),
                });
            }
            labels.push(label.to_string());
        }
        if labels.len() != n {
            return Err(Error::Parse {
                line: 1,
                message: format!("header announces {n} rows, found {}", labels.len()),
            });
        }
        Ok(EmbeddingMatrix {
            model_id: String::new(),
            config_hash: String::new(),
            labels,
            vectors: Array2::from_shape_vec((n, d), data).expect("row count checked"),
        })
    }

    /// Reorders rows to follow `g`'s node order, matching by label.
    pub fn align_to(&self, g: &Graph) -> Result<EmbeddingMatrix> {
        let index: std::collections::HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let missing: Vec<String> = g
            .labels()
            .iter()
            .filter(|l| !index.contains_key(l.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
        let d = self.dimension();
        let mut data = Vec::with_capacity(g.node_count() * d);
        for label in g.labels() {
            data.extend_from_slice(self.row(index[label.as_str()]));
        }
        Ok(EmbeddingMatrix {
            model_id: self.model_id.clone(),
            config_hash: self.config_hash.clone(),
            labels: g.labels().to_vec(),
            vectors: Array2::from_shape_vec((g.node_count(), d), data).expect("shape"),
        })
    }
}

/// Hash over the graph, model and every hyperparameter.
pub fn config_hash(g: &Graph, model: &ModelSpec, cfg: &WalkConfig) -> String {
    let material = serde_json::json!({
        "graph": g.fingerprint(),
        "model": model,
        "config": cfg,
    });
    let digest = Sha256::digest(material.to_string().as_bytes());
    hex::encode(&digest[..12])
}

/// Walk corpus for the given model.
pub fn generate_corpus(g: &Graph, model: &ModelSpec, cfg: &WalkConfig) -> Result<Corpus> {
    model.validate()?;
    match model.kind {
        ModelKind::Deepwalk => walks_uniform(g, cfg),
        ModelKind::Node2vec => walks_node2vec(g, cfg, model.node2vec.as_ref().expect("validated")),
        ModelKind::Struc2vec => {
            let s2v = model.struc2vec.clone().unwrap_or_default();
            let layers = build_struc2vec_layers(g, &s2v)?;
            walks_struc2vec(&layers, cfg, &s2v)
        }
    }
}

/// Generates the model's walks and trains skip-gram vectors on them.
pub fn embed(g: &Graph, model: &ModelSpec, cfg: &WalkConfig) -> Result<EmbeddingMatrix> {
    embed_with_progress(g, model, cfg, |_, _| true)
}

/// [`embed`] reporting `(epochs_done, epochs)` after the corpus is built and
/// after every epoch; returning `false` cancels.
pub fn embed_with_progress(
    g: &Graph,
    model: &ModelSpec,
    cfg: &WalkConfig,
    mut on_epoch: impl FnMut(usize, usize) -> bool,
) -> Result<EmbeddingMatrix> {
    let corpus = generate_corpus(g, model, cfg)?;
    let mut trainer = SkipGramTrainer::new(&corpus, cfg)?;
    if !on_epoch(0, cfg.epochs) {
        return Err(Error::Cancelled);
    }
    for epoch in 1..=cfg.epochs {
        trainer.run_epoch()?;
        if !on_epoch(epoch, cfg.epochs) {
            return Err(Error::Cancelled);
        }
    }
    let vectors = trainer.finish().into_embedding(corpus.node_count);
    Ok(EmbeddingMatrix {
        model_id: model.space_id(),
        config_hash: config_hash(g, model, cfg),
        labels: g.labels().to_vec(),
        vectors,
    })
}
