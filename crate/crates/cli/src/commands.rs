use std::io::Write;
use std::path::{Path, PathBuf};

use embedlens_core::metrics::normalize_metrics;
use embedlens_core::projection::{project_embedding, project_metrics, TsneConfig};
use embedlens_core::ranking::{annotate_ranking, ndcg, rank_embedding_space, rank_graph_space, GraphOrder, Measure, RankingList};
use embedlens_core::regress::{build_pairwise_dataset, rank_features, regression_report, RegressionOptions, RegressionReport, Sampling, TreeParams};
use embedlens_core::structure::analyze_structure;
use embedlens_core::{compute_metrics, detect_communities, embed, Graph, MetricsTable, ModelKind, ModelSpec, Node2vecParams, WalkConfig};
use embedlens_service::pipeline::{ProjectionArtifact, Snapshot};
use serde_json::json;

use crate::fail::{Failure, Outcome};
use crate::input::{emit, load_dataset, load_embedding, load_metrics};
use crate::{Command, EmbedArgs, MetricsArgs, PipelineAction, ProjectArgs, RankArgs, RegressArgs, ServeArgs, StructureArgs};

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Embed(a) => embed_cmd(a),
        Command::Metrics(a) => metrics_cmd(a),
        Command::Project(a) => project_cmd(a),
        Command::Structure(a) => structure_cmd(a),
        Command::Rank(a) => rank_cmd(a),
        Command::Regress(a) => regress_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Pipeline(p) => match p.action {
            PipelineAction::Run(a) => crate::config::run_pipeline(&a.config, a.seed),
        },
    }
}

pub fn to_json(value: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

pub fn model_spec(model: &str, p: Option<f64>, q: Option<f64>) -> Outcome<ModelSpec> {
    let node2vec = match (p, q) {
        (None, None) => None,
        (Some(p), Some(q)) => Some(Node2vecParams { p, q }),
        _ => return Err(Failure::args("--p and --q go together")),
    };
    let kind: ModelKind = model.parse().map_err(|e: embedlens_core::Error| Failure::args(e.to_string()))?;
    if kind == ModelKind::Node2vec && node2vec.is_none() {
        return Err(Failure::args("node2vec requires --p and --q"));
    }
    ModelSpec::parse(model, node2vec).map_err(|e| Failure::args(e.to_string()))
}

fn embed_cmd(a: EmbedArgs) -> Outcome {
    let mut spec = model_spec(&a.model, a.p, a.q)?;
    if a.layers.is_some() || a.stay_probability.is_some() {
        let Some(s2v) = spec.struc2vec.as_mut() else {
            return Err(Failure::args("--layers and --stay-probability apply to struc2vec only"));
        };
        if let Some(l) = a.layers {
            s2v.layers = l;
        }
        if let Some(s) = a.stay_probability {
            s2v.stay_probability = s;
        }
        spec.validate().map_err(|e| Failure::args(e.to_string()))?;
    }
    let d = WalkConfig::default();
    let cfg = WalkConfig {
        walks_per_node: a.walks.unwrap_or(d.walks_per_node),
        walk_length: a.length.unwrap_or(d.walk_length),
        window: a.window.unwrap_or(d.window),
        dimension: a.dim.unwrap_or(d.dimension),
        epochs: a.epochs.unwrap_or(d.epochs),
        negatives_per_positive: a.negatives.unwrap_or(d.negatives_per_positive),
        initial_learning_rate: a.learning_rate.unwrap_or(d.initial_learning_rate),
        seed: a.seed.unwrap_or(d.seed),
    };
    cfg.validate().map_err(|e| Failure::args(e.to_string()))?;
    let ds = load_dataset(&a.dataset.dataset)?;
    log::info!("embedding {} ({} nodes) with {}", ds.id, ds.graph.node_count(), spec.space_id());
    let e = embed(&ds.graph, &spec, &cfg).map_err(compute_failure)?;
    emit(Some(&a.out), &e.to_word2vec())?;
    emit(
        None,
        &to_json(&json!({
            "out": a.out,
            "dataset": ds.id,
            "model": e.model_id,
            "config_hash": e.config_hash,
            "nodes": e.node_count(),
            "dimension": e.dimension(),
        })),
    )
}

/// Errors raised while computing, as opposed to while reading inputs.
fn compute_failure(e: embedlens_core::Error) -> Failure {
    match Failure::from(e) {
        f if f.code == crate::fail::ExitCode::Data => Failure::compute(f.message),
        f => f,
    }
}

pub fn metrics_for(g: &Graph, path: Option<&Path>, seed: u64) -> Outcome<MetricsTable> {
    match path {
        Some(p) => {
            let t = load_metrics(p)?;
            if t.labels != g.labels() {
                return Err(Failure::data(format!("{}: labels do not match the dataset", p.display())));
            }
            Ok(t)
        }
        None => {
            let communities = detect_communities(g, seed);
            compute_metrics(g, &communities).map_err(compute_failure)
        }
    }
}

fn metrics_cmd(a: MetricsArgs) -> Outcome {
    let ds = load_dataset(&a.dataset.dataset)?;
    let t = metrics_for(&ds.graph, None, a.seed)?;
    emit(a.out.as_deref(), &t.to_csv())
}

pub fn projection_artifact(
    g: &Graph,
    space: &str,
    source: ProjectionSource<'_>,
    cfg: &TsneConfig,
) -> Outcome<ProjectionArtifact> {
    cfg.validate().map_err(|e| Failure::args(e.to_string()))?;
    let mut snapshots = Vec::new();
    let record = |p: &embedlens_core::projection::Projection2D| {
        snapshots.push(Snapshot {
            space_id: space.to_string(),
            iteration: p.iteration,
            kl: p.kl,
            coords: p.coords.clone(),
        });
        true
    };
    match source {
        ProjectionSource::Metrics(t) => project_metrics(t, cfg, record),
        ProjectionSource::Embedding(e) => project_embedding(e, cfg, record),
    }
    .map_err(compute_failure)?;
    Ok(ProjectionArtifact {
        space_id: space.to_string(),
        labels: g.labels().to_vec(),
        perplexity: cfg.effective_perplexity(g.node_count()),
        snapshots,
    })
}

pub enum ProjectionSource<'a> {
    Metrics(&'a MetricsTable),
    Embedding(&'a embedlens_core::EmbeddingMatrix),
}

fn project_cmd(a: ProjectArgs) -> Outcome {
    let ds = load_dataset(&a.dataset.dataset)?;
    let d = TsneConfig::default();
    let cfg = TsneConfig {
        perplexity: a.perplexity.unwrap_or(d.perplexity),
        iterations: a.iterations.unwrap_or(d.iterations),
        learning_rate: a.learning_rate.unwrap_or(d.learning_rate),
        snapshot_stride: a.stride.unwrap_or(d.snapshot_stride),
        seed: a.seed,
        ..d
    };
    let artifact = match &a.embedding {
        Some(path) => {
            let e = load_embedding(path, &ds.graph)?;
            projection_artifact(&ds.graph, &e.model_id.clone(), ProjectionSource::Embedding(&e), &cfg)?
        }
        None => {
            let t = metrics_for(&ds.graph, a.metrics.as_deref(), a.seed)?;
            projection_artifact(&ds.graph, "graph", ProjectionSource::Metrics(&t), &cfg)?
        }
    };
    emit(a.out.as_deref(), &to_json(&artifact))
}

fn structure_cmd(a: StructureArgs) -> Outcome {
    let ds = load_dataset(&a.dataset.dataset)?;
    if a.k == 0 || a.k > ds.graph.node_count() {
        return Err(Failure::args(format!("--k must be in 1..={}", ds.graph.node_count())));
    }
    let e = load_embedding(&a.embedding, &ds.graph)?;
    let report = analyze_structure(&ds.graph, &e, a.k, a.seed).map_err(compute_failure)?;
    emit(a.out.as_deref(), &to_json(&report))
}

fn rank_cmd(a: RankArgs) -> Outcome {
    if a.k == 0 {
        return Err(Failure::args("--k must be positive"));
    }
    if a.compare.len() > 2 {
        return Err(Failure::args("at most three embedding spaces can be compared"));
    }
    let measure: Measure = a.measure.parse().map_err(|e: embedlens_core::Error| Failure::args(e.to_string()))?;
    if measure == Measure::Graph {
        return Err(Failure::args("--measure must be cosine or euclidean"));
    }
    let order_by: GraphOrder = a.order_by.parse().map_err(|e: embedlens_core::Error| Failure::args(e.to_string()))?;
    let ds = load_dataset(&a.dataset.dataset)?;
    let g = &ds.graph;
    let anchor = g
        .node_by_label(&a.anchor)
        .ok_or_else(|| Failure::args(format!("no node labelled `{}`", a.anchor)))?;
    let t = metrics_for(g, a.metrics.as_deref(), a.seed)?;
    let ideal = rank_graph_space(g, &t, anchor, order_by, a.k)?;
    let mut paths: Vec<PathBuf> = Vec::new();
    if a.space != "graph" {
        paths.push(PathBuf::from(&a.space));
    }
    paths.extend(a.compare.iter().cloned());
    let mut lists: Vec<RankingList> = Vec::new();
    for path in &paths {
        let e = load_embedding(path, g)?;
        lists.push(rank_embedding_space(&e, anchor, measure, a.k)?);
    }
    let presented = if a.space == "graph" { ideal.clone() } else { lists[0].clone() };
    let score = ndcg(&presented, &ideal, a.k)?;
    let refs: Vec<&RankingList> = lists.iter().collect();
    let result = annotate_ranking(g, &normalize_metrics(&t), &presented, score, &refs)?;
    emit(a.out.as_deref(), &to_json(&result))
}

pub fn regression_options(
    train_fraction: f64,
    max_depth: usize,
    min_leaf: usize,
    lasso_lambda: f64,
    max_pairs: usize,
    seed: u64,
) -> Outcome<(RegressionOptions, Sampling)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Failure::args("--train-fraction must lie in (0, 1)"));
    }
    if min_leaf == 0 {
        return Err(Failure::args("--min-leaf must be positive"));
    }
    if !(lasso_lambda >= 0.0) {
        return Err(Failure::args("--lasso-lambda must be nonnegative"));
    }
    let opts = RegressionOptions {
        train_fraction,
        seed,
        tree: TreeParams {
            max_depth: (max_depth > 0).then_some(max_depth),
            min_leaf,
        },
        lasso_lambda,
    };
    let sampling = if max_pairs == 0 {
        Sampling::All
    } else {
        Sampling::Capped { max_pairs, seed }
    };
    Ok((opts, sampling))
}

/// Report file contents: every report, flat per-regressor records and the
/// ranked feature table.
pub fn regression_output(reports: &[RegressionReport]) -> (serde_json::Value, String) {
    let table = rank_features(reports);
    let records: Vec<serde_json::Value> = reports.iter().flat_map(|r| r.records()).collect();
    let csv = table.to_csv();
    (json!({"reports": reports, "records": records, "feature_table": table}), csv)
}

fn regress_cmd(a: RegressArgs) -> Outcome {
    let (opts, sampling) = regression_options(a.train_fraction, a.max_depth, a.min_leaf, a.lasso_lambda, a.max_pairs, a.seed)?;
    let ds = load_dataset(&a.dataset.dataset)?;
    let embeddings = a
        .embeddings
        .iter()
        .map(|p| load_embedding(p, &ds.graph))
        .collect::<Outcome<Vec<_>>>()?;
    let t = metrics_for(&ds.graph, a.metrics.as_deref(), a.seed)?;
    let mut reports = Vec::new();
    for e in &embeddings {
        log::info!("regressing {} on {} metrics", e.model_id, ds.id);
        let d = build_pairwise_dataset(&t, e, sampling).map_err(compute_failure)?;
        reports.push(regression_report(&e.model_id, &ds.id, &d, &opts).map_err(compute_failure)?);
    }
    let (doc, csv) = regression_output(&reports);
    emit(Some(&a.out), &to_json(&doc))?;
    if let Some(table) = &a.table {
        emit(Some(table), &csv)?;
    }
    emit(None, &csv)
}

fn serve_cmd(a: ServeArgs) -> Outcome {
    let config = embedlens_service::ServiceConfig {
        data_dir: a.data_dir,
        port: a.port,
        workers: a.workers.unwrap_or_else(embedlens_service::default_workers),
    };
    if config.workers == 0 {
        return Err(Failure::args("--workers must be positive"));
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::compute(e.to_string()))?;
    runtime.block_on(async move {
        let state = embedlens_service::AppState::open(config.clone())
            .map_err(|e| Failure::data(format!("{}: {e}", config.data_dir.display())))?;
        let listener = embedlens_service::bind(config.port)
            .await
            .map_err(|e| Failure::args(format!("cannot bind port {}: {e}", config.port)))?;
        let port = listener.local_addr().map_err(|e| Failure::compute(e.to_string()))?.port();
        {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "port {port}");
            let _ = writeln!(out, "ready");
            let _ = out.flush();
        }
        log::info!("serving {} on port {port} with {} workers", config.data_dir.display(), config.workers);
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        embedlens_service::serve(listener, state.clone(), shutdown)
            .await
            .map_err(|e| Failure::compute(e.to_string()))?;
        state.jobs.shutdown();
        Ok(())
    })
}
