//! Turning job requests into validated plans and executing them.

use std::sync::Arc;

use embedlens_core::embed::embed_with_progress;
use embedlens_core::projection::{project_embedding, project_metrics, Projection2D, TsneConfig};
use embedlens_core::regress::{build_pairwise_dataset, regression_report, RegressionOptions, RegressionReport, Sampling, TreeParams};
use embedlens_core::structure::analyze_structure;
use embedlens_core::{
    compute_metrics, detect_communities, EmbeddingMatrix, Error as CoreError, MetricsTable, ModelKind, ModelSpec,
    Node2vecParams, Struc2vecConfig, WalkConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::cache::{ArtifactCache, ArtifactKey, ArtifactMeta};
use crate::datasets::{Dataset, DatasetRegistry};
use crate::error::ApiError;
use crate::jobs::JobKind;

/// Body of `POST /api/jobs`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobRequest {
    pub dataset: String,
    pub kind: JobKind,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub params: Option<Value>,
}

#[derive(Debug, Clone)]
pub enum Task {
    Metrics { seed: u64 },
    Embed { model: ModelSpec, cfg: WalkConfig },
    Project { cfg: TsneConfig },
    Regress { opts: RegressionOptions, sampling: Sampling },
    Structure { k: usize, seed: u64 },
}

/// A validated job: what to compute, from which inputs, under which hash.
#[derive(Debug, Clone)]
pub struct Plan {
    pub kind: JobKind,
    pub dataset: Arc<Dataset>,
    /// Embedding space the job concerns; `graph` for metric-space projections.
    pub space: Option<String>,
    pub config_hash: String,
    /// Normalized parameters, recorded in the artifact sidecar.
    pub params: Value,
    pub inputs: Vec<ArtifactKey>,
    pub task: Task,
}

impl Plan {
    pub fn key(&self) -> ArtifactKey {
        ArtifactKey {
            dataset: self.dataset.info.id.clone(),
            kind: self.kind,
            config_hash: self.config_hash.clone(),
        }
    }
}

/// One t-SNE snapshot as sent on the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub space_id: String,
    pub iteration: usize,
    pub kl: f64,
    pub coords: Vec<[f64; 2]>,
}

/// Stored projection artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionArtifact {
    pub space_id: String,
    pub labels: Vec<String>,
    pub perplexity: f64,
    pub snapshots: Vec<Snapshot>,
}

/// Stored regression artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionArtifact {
    pub report: RegressionReport,
    pub records: Vec<Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MetricsParams {
    seed: u64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        MetricsParams { seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressParams {
    pub train_fraction: f64,
    pub seed: u64,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub lasso_lambda: f64,
    /// `None` regresses on every pair.
    pub max_pairs: Option<usize>,
    pub sample_seed: u64,
}

impl Default for RegressParams {
    fn default() -> Self {
        let o = RegressionOptions::default();
        RegressParams {
            train_fraction: o.train_fraction,
            seed: o.seed,
            max_depth: o.tree.max_depth,
            min_leaf: o.tree.min_leaf,
            lasso_lambda: o.lasso_lambda,
            max_pairs: Some(embedlens_core::regress::DEFAULT_MAX_PAIRS),
            sample_seed: 0,
        }
    }
}

impl RegressParams {
    pub fn options(&self) -> Result<(RegressionOptions, Sampling), String> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err("train_fraction must lie in (0, 1)".into());
        }
        if self.min_leaf == 0 || self.max_depth == Some(0) {
            return Err("min_leaf and max_depth must be positive".into());
        }
        if !(self.lasso_lambda >= 0.0) {
            return Err("lasso_lambda must be nonnegative".into());
        }
        let opts = RegressionOptions {
            train_fraction: self.train_fraction,
            seed: self.seed,
            tree: TreeParams {
                max_depth: self.max_depth,
                min_leaf: self.min_leaf,
            },
            lasso_lambda: self.lasso_lambda,
        };
        let sampling = match self.max_pairs {
            Some(0) => return Err("max_pairs must be positive".into()),
            Some(max_pairs) => Sampling::Capped {
                max_pairs,
                seed: self.sample_seed,
            },
            None => Sampling::All,
        };
        Ok((opts, sampling))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StructureParams {
    k: usize,
    seed: u64,
}

impl Default for StructureParams {
    fn default() -> Self {
        StructureParams { k: 3, seed: 0 }
    }
}

fn parse_params<T: serde::de::DeserializeOwned>(params: Value) -> Result<T, ApiError> {
    serde_json::from_value(params).map_err(|e| ApiError::bad_request(format!("invalid params: {e}")))
}

fn params_object(params: Option<Value>) -> Result<Map<String, Value>, ApiError> {
    match params {
        None | Some(Value::Null) => Ok(Map::new()),
        Some(Value::Object(m)) => Ok(m),
        Some(_) => Err(ApiError::bad_request("params must be a JSON object")),
    }
}

fn take(obj: &mut Map<String, Value>, keys: &[&str]) -> Map<String, Value> {
    keys.iter()
        .filter_map(|&k| obj.remove(k).map(|v| (k.to_string(), v)))
        .collect()
}

fn bad(e: CoreError) -> ApiError {
    ApiError::bad_request(e.to_string())
}

fn digest(material: &Value) -> String {
    let d = Sha256::digest(material.to_string().as_bytes());
    hex::encode(&d[..12])
}

/// Resolves an embedding model from `model` plus the model-specific keys in
/// `params`; the remaining keys configure the walks and training.
pub fn parse_embed_request(model: &str, params: Option<Value>) -> Result<(ModelSpec, WalkConfig), ApiError> {
    let mut obj = params_object(params)?;
    let n2v = take(&mut obj, &["p", "q"]);
    let s2v = take(&mut obj, &["layers", "stay_probability", "candidates"]);
    let mut spec = if n2v.is_empty() {
        ModelSpec::from_space_id(model).map_err(bad)?
    } else {
        let p: Node2vecParams = parse_params(Value::Object(n2v))?;
        ModelSpec::parse(model, Some(p)).map_err(bad)?
    };
    if !s2v.is_empty() {
        if spec.kind != ModelKind::Struc2vec {
            return Err(ApiError::bad_request("layers/stay_probability/candidates apply to struc2vec only"));
        }
        spec.struc2vec = Some(parse_params::<Struc2vecConfig>(Value::Object(s2v))?);
    }
    spec.validate().map_err(bad)?;
    let cfg: WalkConfig = parse_params(Value::Object(obj))?;
    cfg.validate().map_err(bad)?;
    Ok((spec, cfg))
}

fn embed_hint(dataset: &str, space: &str) -> String {
    let body = match ModelSpec::from_space_id(space) {
        Ok(spec) => match spec.node2vec {
            Some(p) => json!({"dataset": dataset, "kind": "embed", "model": "node2vec", "params": {"p": p.p, "q": p.q}}),
            None => json!({"dataset": dataset, "kind": "embed", "model": spec.kind.as_str()}),
        },
        Err(_) => json!({"dataset": dataset, "kind": "embed", "model": space}),
    };
    format!("POST /api/jobs {body}")
}

fn metrics_hint(dataset: &str) -> String {
    format!("POST /api/jobs {}", json!({"dataset": dataset, "kind": "metrics"}))
}

pub fn latest_metrics(cache: &ArtifactCache, dataset: &Dataset) -> Result<ArtifactMeta, ApiError> {
    cache
        .latest(&dataset.info.id, JobKind::Metrics, |_| true)
        .ok_or_else(|| {
            ApiError::missing(
                format!("metrics for `{}` have not been computed", dataset.info.id),
                metrics_hint(&dataset.info.id),
            )
        })
}

/// Canonical space id for a user-supplied model/space name.
pub fn canonical_space(space: &str) -> Result<String, ApiError> {
    Ok(ModelSpec::from_space_id(space).map_err(bad)?.space_id())
}

pub fn latest_embedding(cache: &ArtifactCache, dataset: &Dataset, space: &str) -> Result<ArtifactMeta, ApiError> {
    let space = canonical_space(space)?;
    cache
        .latest(&dataset.info.id, JobKind::Embed, |m| m.space.as_deref() == Some(space.as_str()))
        .ok_or_else(|| {
            ApiError::missing(
                format!("no `{space}` embedding of `{}` has been computed", dataset.info.id),
                embed_hint(&dataset.info.id, &space),
            )
        })
}

fn key_of(meta: &ArtifactMeta) -> ArtifactKey {
    ArtifactKey {
        dataset: meta.dataset.clone(),
        kind: meta.kind,
        config_hash: meta.config_hash.clone(),
    }
}

fn require_model(req: &JobRequest) -> Result<String, ApiError> {
    req.model
        .clone()
        .ok_or_else(|| ApiError::bad_request(format!("`{}` jobs need a model", req.kind.as_str())))
}

/// Validates a request and resolves its inputs. 400 for bad parameters, 404
/// for an unknown dataset, 409 when an input artifact is missing.
pub fn plan(req: JobRequest, registry: &DatasetRegistry, cache: &ArtifactCache) -> Result<Plan, ApiError> {
    let dataset = registry.get(&req.dataset)?;
    let version = dataset.info.version.clone();
    let hashed = |kind: JobKind, space: &Option<String>, params: &Value, inputs: &[ArtifactKey]| {
        digest(&json!({
            "kind": kind.as_str(),
            "graph": version,
            "space": space,
            "params": params,
            "inputs": inputs.iter().map(|k| &k.config_hash).collect::<Vec<_>>(),
        }))
    };
    let (space, params, inputs, task, hash) = match req.kind {
        JobKind::Metrics => {
            if req.model.is_some() {
                return Err(ApiError::bad_request("metrics jobs take no model"));
            }
            let p: MetricsParams = parse_params(Value::Object(params_object(req.params)?))?;
            let params = serde_json::to_value(&p).expect("params serialize");
            let hash = hashed(JobKind::Metrics, &None, &params, &[]);
            (None, params, vec![], Task::Metrics { seed: p.seed }, hash)
        }
        JobKind::Embed => {
            let (model, cfg) = parse_embed_request(&require_model(&req)?, req.params)?;
            let hash = embedlens_core::embed::config_hash(&dataset.graph, &model, &cfg);
            let params = json!({"model": model, "config": cfg});
            (Some(model.space_id()), params, vec![], Task::Embed { model, cfg }, hash)
        }
        JobKind::Project => {
            let model = require_model(&req)?;
            let cfg: TsneConfig = parse_params(Value::Object(params_object(req.params)?))?;
            cfg.validate().map_err(bad)?;
            let (space, input) = if model == "graph" {
                ("graph".to_string(), latest_metrics(cache, &dataset)?)
            } else {
                let space = canonical_space(&model)?;
                let meta = latest_embedding(cache, &dataset, &space)?;
                (space, meta)
            };
            let params = serde_json::to_value(&cfg).expect("params serialize");
            let space = Some(space);
            let inputs = vec![key_of(&input)];
            let hash = hashed(JobKind::Project, &space, &params, &inputs);
            (space, params, inputs, Task::Project { cfg }, hash)
        }
        JobKind::Regress => {
            let space = canonical_space(&require_model(&req)?)?;
            let p: RegressParams = parse_params(Value::Object(params_object(req.params)?))?;
            let (opts, sampling) = p.options().map_err(ApiError::bad_request)?;
            let inputs = vec![
                key_of(&latest_metrics(cache, &dataset)?),
                key_of(&latest_embedding(cache, &dataset, &space)?),
            ];
            let params = serde_json::to_value(&p).expect("params serialize");
            let space = Some(space);
            let hash = hashed(JobKind::Regress, &space, &params, &inputs);
            (space, params, inputs, Task::Regress { opts, sampling }, hash)
        }
        JobKind::Structure => {
            let space = canonical_space(&require_model(&req)?)?;
            let p: StructureParams = parse_params(Value::Object(params_object(req.params)?))?;
            let n = dataset.graph.node_count();
            if p.k == 0 || p.k > n {
                return Err(ApiError::bad_request(format!("k must be in 1..={n}")));
            }
            let inputs = vec![key_of(&latest_embedding(cache, &dataset, &space)?)];
            let params = serde_json::to_value(&p).expect("params serialize");
            let space = Some(space);
            let hash = hashed(JobKind::Structure, &space, &params, &inputs);
            (space, params, inputs, Task::Structure { k: p.k, seed: p.seed }, hash)
        }
    };
    Ok(Plan {
        kind: req.kind,
        dataset,
        space,
        config_hash: hash,
        params,
        inputs,
        task,
    })
}

/// Hooks a running job uses to report progress and observe cancellation.
pub struct Progress<'a> {
    pub set: &'a (dyn Fn(f64) + Sync),
    pub cancelled: &'a (dyn Fn() -> bool + Sync),
    pub snapshot: &'a (dyn Fn(Snapshot) + Sync),
}

fn load_metrics(cache: &ArtifactCache, key: &ArtifactKey) -> Result<MetricsTable, String> {
    let text = cache.read_string(key).map_err(|e| format!("reading metrics: {e}"))?;
    MetricsTable::from_csv(&text).map_err(|e| format!("parsing metrics: {e}"))
}

pub fn load_embedding(cache: &ArtifactCache, key: &ArtifactKey, space: &str, dataset: &Dataset) -> Result<EmbeddingMatrix, String> {
    let text = cache.read_string(key).map_err(|e| format!("reading embedding: {e}"))?;
    let mut e = EmbeddingMatrix::from_word2vec(&text).map_err(|e| format!("parsing embedding: {e}"))?;
    e.model_id = space.to_string();
    e.config_hash = key.config_hash.clone();
    e.align_to(&dataset.graph).map_err(|e| e.to_string())
}

fn message(e: CoreError) -> String {
    match e {
        CoreError::Cancelled => "killed".to_string(),
        other => other.to_string(),
    }
}

/// Runs a plan and stores its artifact. Errors are user-facing messages.
pub fn execute(plan: &Plan, cache: &ArtifactCache, progress: &Progress<'_>) -> Result<(), String> {
    let g = &plan.dataset.graph;
    let bytes: Vec<u8> = match &plan.task {
        Task::Metrics { seed } => {
            let communities = detect_communities(g, *seed);
            let table = compute_metrics(g, &communities).map_err(message)?;
            table.to_csv().into_bytes()
        }
        Task::Embed { model, cfg } => {
            let e = embed_with_progress(g, model, cfg, |done, total| {
                (progress.set)(done as f64 / total.max(1) as f64);
                !(progress.cancelled)()
            })
            .map_err(message)?;
            e.to_word2vec().into_bytes()
        }
        Task::Project { cfg } => {
            let space = plan.space.clone().expect("projections name a space");
            let mut snapshots = Vec::new();
            let on_snapshot = |s: &Projection2D| {
                let snap = Snapshot {
                    space_id: space.clone(),
                    iteration: s.iteration,
                    kl: s.kl,
                    coords: s.coords.clone(),
                };
                snapshots.push(snap.clone());
                (progress.snapshot)(snap);
                (progress.set)(s.iteration as f64 / cfg.iterations as f64);
                !(progress.cancelled)()
            };
            let result = if space == "graph" {
                let t = load_metrics(cache, &plan.inputs[0])?;
                project_metrics(&t, cfg, on_snapshot)
            } else {
                let e = load_embedding(cache, &plan.inputs[0], &space, &plan.dataset)?;
                project_embedding(&e, cfg, on_snapshot)
            };
            result.map_err(message)?;
            let artifact = ProjectionArtifact {
                space_id: space,
                labels: g.labels().to_vec(),
                perplexity: cfg.effective_perplexity(g.node_count()),
                snapshots,
            };
            serde_json::to_vec(&artifact).expect("artifact serializes")
        }
        Task::Regress { opts, sampling } => {
            let t = load_metrics(cache, &plan.inputs[0])?;
            let e = load_embedding(cache, &plan.inputs[1], plan.space.as_deref().unwrap_or_default(), &plan.dataset)?;
            let d = build_pairwise_dataset(&t, &e, *sampling).map_err(message)?;
            (progress.set)(0.2);
            if (progress.cancelled)() {
                return Err("killed".into());
            }
            let report = regression_report(&e.model_id, &plan.dataset.info.id, &d, opts).map_err(message)?;
            let records = report.records();
            serde_json::to_vec(&RegressionArtifact { report, records }).expect("artifact serializes")
        }
        Task::Structure { k, seed } => {
            let e = load_embedding(cache, &plan.inputs[0], plan.space.as_deref().unwrap_or_default(), &plan.dataset)?;
            let report = analyze_structure(g, &e, *k, *seed).map_err(message)?;
            serde_json::to_vec(&report).expect("artifact serializes")
        }
    };
    if (progress.cancelled)() {
        return Err("killed".into());
    }
    cache
        .write(&plan.key(), &bytes, plan.space.clone(), plan.params.clone(), plan.inputs.iter().map(|k| k.config_hash.clone()).collect())
        .map_err(|e| format!("storing artifact: {e}"))?;
    (progress.set)(1.0);
    Ok(())
}
