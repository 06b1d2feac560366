//! `pipeline run`: metrics, embeddings, regression and optional structure and
//! projection stages for one or more datasets, driven by a TOML file.

use std::fs;
use std::path::{Path, PathBuf};

use embedlens_core::graph;
use embedlens_core::projection::TsneConfig;
use embedlens_core::structure::analyze_structure;
use embedlens_core::regress::{build_pairwise_dataset, regression_report};
use embedlens_core::{embed, largest_component, SyntheticSpec};
use embedlens_service::pipeline::parse_embed_request;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::commands::{metrics_for, projection_artifact, regression_options, regression_output, to_json, ProjectionSource};
use crate::fail::{Failure, Outcome};
use crate::input::{emit, load_dataset, LoadedDataset};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for every stage unless a model entry sets its own.
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub dataset: Option<DatasetEntry>,
    #[serde(default)]
    pub datasets: Vec<DatasetEntry>,
    /// Each entry names a `model` plus optional walk, training and model parameters.
    pub models: Vec<toml::Table>,
    #[serde(default)]
    pub regression: RegressionSection,
    #[serde(default)]
    pub structure: Option<StructureSection>,
    #[serde(default)]
    pub projection: Option<TsneConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetEntry {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionSection {
    /// 0 regresses on every pair.
    pub max_pairs: usize,
    pub train_fraction: f64,
    /// 0 grows the tree without a depth limit.
    pub max_depth: usize,
    pub min_leaf: usize,
    pub lasso_lambda: f64,
}

impl Default for RegressionSection {
    fn default() -> Self {
        RegressionSection {
            max_pairs: embedlens_core::regress::DEFAULT_MAX_PAIRS,
            train_fraction: 0.8,
            max_depth: 10,
            min_leaf: 20,
            lasso_lambda: 1e-3,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSection {
    pub k: usize,
}

pub fn parse_config(text: &str) -> Outcome<PipelineConfig> {
    let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Failure::args(format!("pipeline config: {e}")))?;
    let count = cfg.datasets.len() + usize::from(cfg.dataset.is_some());
    if count == 0 {
        return Err(Failure::args("pipeline config: give `dataset` or `datasets`"));
    }
    if cfg.models.is_empty() {
        return Err(Failure::args("pipeline config: `models` is empty"));
    }
    Ok(cfg)
}

fn load_entry(entry: &DatasetEntry, base: &Path) -> Outcome<LoadedDataset> {
    match (&entry.path, &entry.synthetic) {
        (Some(path), None) => {
            let path = base.join(path);
            let mut ds = load_dataset(&path.to_string_lossy())?;
            if let Some(id) = &entry.id {
                ds.id = id.clone();
            }
            Ok(ds)
        }
        (None, Some(spec)) => {
            spec.validate().map_err(|e| Failure::args(format!("synthetic dataset: {e}")))?;
            let g = graph::generate(spec)?;
            let id = entry.id.clone().ok_or_else(|| Failure::args("synthetic datasets need an `id`"))?;
            Ok(LoadedDataset {
                id,
                graph: largest_component(&g).graph,
            })
        }
        _ => Err(Failure::args("each dataset needs exactly one of `path` or `synthetic`")),
    }
}

fn toml_to_json(table: &toml::Table) -> Outcome<Value> {
    serde_json::to_value(table).map_err(|e| Failure::args(e.to_string()))
}

pub fn run_pipeline(config_path: &Path, seed_override: Option<u64>) -> Outcome {
    let text = fs::read_to_string(config_path).map_err(|e| Failure::data(format!("{}: {e}", config_path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let base = config_path.parent().unwrap_or(Path::new("."));
    let out_dir = base.join(&cfg.output_dir);

    // Validate every model before any work starts.
    let mut models = Vec::new();
    for entry in &cfg.models {
        let mut params = toml_to_json(entry)?;
        let obj = params.as_object_mut().expect("tables become objects");
        let model = match obj.remove("model") {
            Some(Value::String(m)) => m,
            _ => return Err(Failure::args("every model entry needs a string `model`")),
        };
        obj.entry("seed").or_insert(json!(cfg.seed));
        let (spec, walk) = parse_embed_request(&model, Some(params)).map_err(|e| Failure::args(e.message))?;
        models.push((spec, walk));
    }
    let r = &cfg.regression;
    let (opts, sampling) = regression_options(r.train_fraction, r.max_depth, r.min_leaf, r.lasso_lambda, r.max_pairs, cfg.seed)?;
    if let Some(p) = &cfg.projection {
        p.validate().map_err(|e| Failure::args(e.to_string()))?;
    }

    let entries: Vec<&DatasetEntry> = cfg.dataset.iter().chain(cfg.datasets.iter()).collect();
    let mut reports = Vec::new();
    let mut manifest = Vec::new();
    for entry in entries {
        let ds = load_entry(entry, base)?;
        let dir = out_dir.join(&ds.id);
        let mut files = Vec::new();
        log::info!("{}: {} nodes, {} edges", ds.id, ds.graph.node_count(), ds.graph.edge_count());
        let t = metrics_for(&ds.graph, None, cfg.seed)?;
        let path = dir.join("metrics.csv");
        emit(Some(&path), &t.to_csv())?;
        files.push(path);
        if let Some(p) = &cfg.projection {
            let tsne = TsneConfig { seed: cfg.seed, ..p.clone() };
            let a = projection_artifact(&ds.graph, "graph", ProjectionSource::Metrics(&t), &tsne)?;
            let path = dir.join("projection_graph.json");
            emit(Some(&path), &to_json(&a))?;
            files.push(path);
        }
        for (spec, walk) in &models {
            let space = spec.space_id();
            log::info!("{}: embedding with {space}", ds.id);
            let e = embed(&ds.graph, spec, walk).map_err(|e| Failure::compute(e.to_string()))?;
            let path = dir.join(format!("{space}.txt"));
            emit(Some(&path), &e.to_word2vec())?;
            files.push(path);
            log::info!("{}: regressing {space}", ds.id);
            let d = build_pairwise_dataset(&t, &e, sampling).map_err(|e| Failure::compute(e.to_string()))?;
            reports.push(regression_report(&space, &ds.id, &d, &opts).map_err(|e| Failure::compute(e.to_string()))?);
            if let Some(s) = &cfg.structure {
                let report = analyze_structure(&ds.graph, &e, s.k, cfg.seed).map_err(|e| Failure::compute(e.to_string()))?;
                let path = dir.join(format!("structure_{space}.json"));
                emit(Some(&path), &to_json(&report))?;
                files.push(path);
            }
            if let Some(p) = &cfg.projection {
                let tsne = TsneConfig { seed: cfg.seed, ..p.clone() };
                let a = projection_artifact(&ds.graph, &space, ProjectionSource::Embedding(&e), &tsne)?;
                let path = dir.join(format!("projection_{space}.json"));
                emit(Some(&path), &to_json(&a))?;
                files.push(path);
            }
        }
        manifest.push(json!({"id": ds.id, "nodes": ds.graph.node_count(), "files": files}));
    }
    let (doc, csv) = regression_output(&reports);
    let report_path = out_dir.join("regression.json");
    let table_path = out_dir.join("table.csv");
    emit(Some(&report_path), &to_json(&doc))?;
    emit(Some(&table_path), &csv)?;
    emit(
        None,
        &to_json(&json!({
            "output_dir": out_dir,
            "datasets": manifest,
            "regression": report_path,
            "table": table_path,
        })),
    )
}
