//! On-disk artifact cache: `<root>/<dataset>/<kind>/<hash>.<ext>` plus a
//! `<hash>.meta.json` sidecar. Writes go to a temporary file in the same
//! directory and are renamed into place.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::jobs::JobKind;

/// Writes `bytes` to `path` so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArtifactKey {
    pub dataset: String,
    pub kind: JobKind,
    pub config_hash: String,
}

/// Sidecar describing how an artifact was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub dataset: String,
    pub kind: JobKind,
    pub config_hash: String,
    /// Embedding space (`graph` for metric-space projections).
    pub space: Option<String>,
    pub params: serde_json::Value,
    /// Config hashes of the artifacts this one was computed from.
    pub inputs: Vec<String>,
    pub created_ms: u128,
}

pub struct ArtifactCache {
    root: PathBuf,
    locks: Mutex<HashMap<ArtifactKey, Arc<RwLock<()>>>>,
}

impl ArtifactCache {
    pub fn open(root: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&root)?;
        Ok(ArtifactCache {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    fn lock(&self, key: &ArtifactKey) -> Arc<RwLock<()>> {
        self.locks
            .lock()
            .expect("cache lock table")
            .entry(key.clone())
            .or_default()
            .clone()
    }

    fn dir(&self, dataset: &str, kind: JobKind) -> PathBuf {
        self.root.join(dataset).join(kind.as_str())
    }

    pub fn path(&self, key: &ArtifactKey) -> PathBuf {
        self.dir(&key.dataset, key.kind)
            .join(format!("{}.{}", key.config_hash, key.kind.extension()))
    }

    fn meta_path(&self, key: &ArtifactKey) -> PathBuf {
        self.dir(&key.dataset, key.kind)
            .join(format!("{}.meta.json", key.config_hash))
    }

    pub fn contains(&self, key: &ArtifactKey) -> bool {
        let lock = self.lock(key);
        let _guard = lock.read().expect("artifact lock");
        self.path(key).is_file() && self.meta_path(key).is_file()
    }

    pub fn read(&self, key: &ArtifactKey) -> std::io::Result<Vec<u8>> {
        let lock = self.lock(key);
        let _guard = lock.read().expect("artifact lock");
        fs::read(self.path(key))
    }

    pub fn read_string(&self, key: &ArtifactKey) -> std::io::Result<String> {
        String::from_utf8(self.read(key)?)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Stores the artifact, then its sidecar; the sidecar marks completion.
    pub fn write(
        &self,
        key: &ArtifactKey,
        bytes: &[u8],
        space: Option<String>,
        params: serde_json::Value,
        inputs: Vec<String>,
    ) -> std::io::Result<()> {
        let lock = self.lock(key);
        let _guard = lock.write().expect("artifact lock");
        write_atomic(&self.path(key), bytes)?;
        let meta = ArtifactMeta {
            dataset: key.dataset.clone(),
            kind: key.kind,
            config_hash: key.config_hash.clone(),
            space,
            params,
            inputs,
            created_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis()),
        };
        let json = serde_json::to_vec_pretty(&meta).expect("meta serializes");
        write_atomic(&self.meta_path(key), &json)
    }

    /// All completed artifacts of a kind for a dataset.
    pub fn entries(&self, dataset: &str, kind: JobKind) -> Vec<ArtifactMeta> {
        let Ok(dir) = fs::read_dir(self.dir(dataset, kind)) else {
            return Vec::new();
        };
        let mut out: Vec<ArtifactMeta> = dir
            .flatten()
            .filter(|e| e.file_name().to_string_lossy().ends_with(".meta.json"))
            .filter_map(|e| fs::read(e.path()).ok())
            .filter_map(|b| serde_json::from_slice(&b).ok())
            .collect();
        out.sort_by(|a: &ArtifactMeta, b| {
            a.created_ms
                .cmp(&b.created_ms)
                .then_with(|| a.config_hash.cmp(&b.config_hash))
        });
        out
    }

    /// Most recent artifact of a kind matching `pred`.
    pub fn latest(
        &self,
        dataset: &str,
        kind: JobKind,
        pred: impl Fn(&ArtifactMeta) -> bool,
    ) -> Option<ArtifactMeta> {
        self.entries(dataset, kind).into_iter().filter(|m| pred(m)).last()
    }
}
