//! Datasets known to the service: edge-list files and saved synthetic specs
//! under `<data_dir>/datasets`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use embedlens_core::graph::{self, load_edge_list, parse_edge_list, EdgeListOptions};
use embedlens_core::{largest_component, Graph, SyntheticSpec};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

const SYNTHETIC_SUFFIX: &str = ".synthetic.json";
const EDGE_LIST_EXTENSIONS: [&str; 3] = ["edges", "txt", "csv"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    /// Node and edge counts of the file as loaded, before any reduction.
    pub nodes: usize,
    pub edges: usize,
    /// `file:<name>` or `synthetic`.
    pub source: String,
    /// Nodes kept after reducing to the largest connected component.
    pub component_nodes: usize,
    /// Fingerprint of the analyzed graph.
    pub version: String,
}

/// A loaded dataset; analyses run on `graph`, the largest component.
#[derive(Debug)]
pub struct Dataset {
    pub info: DatasetInfo,
    pub graph: Graph,
}

/// Body of `POST /api/datasets`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewDataset {
    pub id: String,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
    /// Edge list text, one `u v` pair per line.
    #[serde(default)]
    pub edge_list: Option<String>,
}

pub struct DatasetRegistry {
    dir: PathBuf,
    loaded: RwLock<BTreeMap<String, Arc<Dataset>>>,
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
        && !id.starts_with('.')
}

enum Source {
    File(PathBuf),
    Synthetic(PathBuf),
}

impl DatasetRegistry {
    pub fn open(data_dir: &Path) -> std::io::Result<Self> {
        let dir = data_dir.join("datasets");
        fs::create_dir_all(&dir)?;
        Ok(DatasetRegistry {
            dir,
            loaded: RwLock::new(BTreeMap::new()),
        })
    }

    fn sources(&self) -> BTreeMap<String, Source> {
        let mut out = BTreeMap::new();
        let Ok(entries) = fs::read_dir(&self.dir) else {
            return out;
        };
        for entry in entries.flatten() {
            let path = entry.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if let Some(id) = name.strip_suffix(SYNTHETIC_SUFFIX) {
                if valid_id(id) {
                    out.insert(id.to_string(), Source::Synthetic(path.clone()));
                }
                continue;
            }
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            if EDGE_LIST_EXTENSIONS.contains(&ext) && valid_id(stem) {
                out.entry(stem.to_string()).or_insert(Source::File(path.clone()));
            }
        }
        out
    }

    /// Every dataset that loads; broken files are logged and skipped.
    pub fn list(&self) -> Vec<DatasetInfo> {
        self.sources()
            .into_keys()
            .filter_map(|id| match self.get(&id) {
                Ok(d) => Some(d.info.clone()),
                Err(e) => {
                    log::warn!("dataset {id} skipped: {}", e.message);
                    None
                }
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<Arc<Dataset>, ApiError> {
        if let Some(d) = self.loaded.read().expect("registry lock").get(id) {
            return Ok(d.clone());
        }
        let source = self
            .sources()
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{id}`")))?;
        let (full, source_name) = match &source {
            Source::File(path) => {
                let g = load_edge_list(path, &EdgeListOptions::default())
                    .map_err(|e| ApiError::unprocessable(format!("dataset `{id}`: {e}")))?;
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or(id);
                (g, format!("file:{name}"))
            }
            Source::Synthetic(path) => {
                let spec = read_spec(path)?;
                let g = graph::generate(&spec)
                    .map_err(|e| ApiError::unprocessable(format!("dataset `{id}`: {e}")))?;
                (g, "synthetic".to_string())
            }
        };
        let component = largest_component(&full).graph;
        if component.node_count() < full.node_count() {
            log::warn!(
                "dataset {id}: analyzing the largest component ({} of {} nodes)",
                component.node_count(),
                full.node_count()
            );
        }
        let dataset = Arc::new(Dataset {
            info: DatasetInfo {
                id: id.to_string(),
                nodes: full.node_count(),
                edges: full.edge_count(),
                source: source_name,
                component_nodes: component.node_count(),
                version: component.fingerprint(),
            },
            graph: component,
        });
        self.loaded
            .write()
            .expect("registry lock")
            .insert(id.to_string(), dataset.clone());
        Ok(dataset)
    }

    /// Saves a new dataset; an existing id is a conflict.
    pub fn add(&self, new: NewDataset) -> Result<DatasetInfo, ApiError> {
        if !valid_id(&new.id) {
            return Err(ApiError::bad_request(format!("invalid dataset id `{}`", new.id)));
        }
        if self.sources().contains_key(&new.id) {
            return Err(ApiError::conflict(format!("dataset `{}` already exists", new.id)));
        }
        let (path, bytes) = match (new.synthetic, new.edge_list) {
            (Some(spec), None) => {
                spec.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
                graph::generate(&spec).map_err(|e| ApiError::bad_request(e.to_string()))?;
                let json = serde_json::to_vec_pretty(&spec).expect("spec serializes");
                (self.dir.join(format!("{}{SYNTHETIC_SUFFIX}", new.id)), json)
            }
            (None, Some(text)) => {
                parse_edge_list(&text, &EdgeListOptions::default())
                    .map_err(|e| ApiError::bad_request(e.to_string()))?;
                (self.dir.join(format!("{}.edges", new.id)), text.into_bytes())
            }
            _ => {
                return Err(ApiError::bad_request(
                    "give exactly one of `synthetic` or `edge_list`",
                ))
            }
        };
        crate::cache::write_atomic(&path, &bytes)
            .map_err(|e| ApiError::internal(format!("saving dataset: {e}")))?;
        Ok(self.get(&new.id)?.info.clone())
    }
}

fn read_spec(path: &Path) -> Result<SyntheticSpec, ApiError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ApiError::internal(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| ApiError::unprocessable(format!("{}: {e}", path.display())))
}
