//! Resolving datasets and loading embeddings and metrics from disk.

use std::fs;
use std::path::{Path, PathBuf};

use embedlens_core::graph::{self, load_edge_list, EdgeListOptions};
use embedlens_core::{largest_component, EmbeddingMatrix, Graph, MetricsTable, SyntheticSpec};
use embedlens_service::DatasetRegistry;
use serde_json::{Map, Value};

use crate::fail::{Failure, Outcome};

pub struct LoadedDataset {
    pub id: String,
    /// Largest connected component of the input.
    pub graph: Graph,
}

fn synthetic_inline(kind: &str, rest: &str) -> Outcome<SyntheticSpec> {
    let mut map = Map::new();
    map.insert("kind".into(), Value::String(kind.into()));
    for pair in rest.split(',').filter(|s| !s.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Failure::args(format!("expected key=value in synthetic spec, got `{pair}`")))?;
        let key = if k == "m" { "ba_m" } else { k };
        let value = if let Ok(u) = v.parse::<u64>() {
            Value::from(u)
        } else if let Ok(f) = v.parse::<f64>() {
            Value::from(f)
        } else if let Ok(b) = v.parse::<bool>() {
            Value::from(b)
        } else {
            return Err(Failure::args(format!("invalid value `{v}` for `{k}`")));
        };
        map.insert(key.into(), value);
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| Failure::args(format!("synthetic spec: {e}")))
}

fn read_spec_file(path: &Path) -> Outcome<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("dataset");
    name.split('.').next().unwrap_or(name).to_string()
}

pub fn data_dir() -> PathBuf {
    std::env::var_os("WORKBENCH_DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from)
}

/// Accepts an edge-list path, a synthetic spec file (`.json`/`.toml`), an
/// inline spec (`ba:n=1000,m=1,seed=1`, `planted:n=..,communities=..`), or
/// the id of a dataset in the workbench data directory.
pub fn load_dataset(arg: &str) -> Outcome<LoadedDataset> {
    let path = Path::new(arg);
    let (id, full) = if path.is_file() {
        let is_spec = path
            .extension()
            .is_some_and(|e| e == "json" || e == "toml");
        let g = if is_spec {
            graph::generate(&read_spec_file(path)?)?
        } else {
            load_edge_list(path, &EdgeListOptions::default())?
        };
        (stem(path), g)
    } else if let Some(rest) = arg.strip_prefix("ba:") {
        (format!("ba_{}", rest.replace([',', '='], "_")), graph::generate(&synthetic_inline("barabasi_albert", rest)?)?)
    } else if let Some(rest) = arg.strip_prefix("planted:") {
        (
            format!("planted_{}", rest.replace([',', '='], "_")),
            graph::generate(&synthetic_inline("planted_partition", rest)?)?,
        )
    } else {
        let registry = DatasetRegistry::open(&data_dir()).map_err(|e| Failure::data(e.to_string()))?;
        let d = registry
            .get(arg)
            .map_err(|e| Failure::data(format!("dataset `{arg}`: {}", e.message)))?;
        return Ok(LoadedDataset {
            id: d.info.id.clone(),
            graph: d.graph.clone(),
        });
    };
    let component = largest_component(&full).graph;
    if component.node_count() < full.node_count() {
        log::warn!(
            "{id}: analyzing the largest component ({} of {} nodes)",
            component.node_count(),
            full.node_count()
        );
    }
    Ok(LoadedDataset { id, graph: component })
}

/// Reads a word2vec text file and aligns it to `g`; missing labels are a data error.
pub fn load_embedding(path: &Path, g: &Graph) -> Outcome<EmbeddingMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut e = EmbeddingMatrix::from_word2vec(&text)
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    if e.model_id.is_empty() || e.model_id == "unknown" {
        e.model_id = stem(path);
    }
    e.align_to(g)
        .map_err(|err| Failure::data(format!("{}: {err}", path.display())))
}

pub fn load_metrics(path: &Path) -> Outcome<MetricsTable> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    MetricsTable::from_csv(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Writes to `out`, or to standard output when absent.
pub fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Failure::data(format!("{}: {e}", dir.display())))?;
            }
            fs::write(path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| Failure::data(format!("stdout: {e}")))
        }
    }
}
