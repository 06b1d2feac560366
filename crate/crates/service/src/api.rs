//! HTTP routes.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use embedlens_core::metrics::normalize_metrics;
use embedlens_core::ranking::{
    annotate_ranking, ndcg, rank_embedding_space, rank_graph_space, GraphOrder, Measure, RankingList,
    DEFAULT_LIST_LENGTH,
};
use embedlens_core::regress::rank_features;
use embedlens_core::{Metric, MetricsTable};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::cache::ArtifactKey;
use crate::datasets::{Dataset, NewDataset};
use crate::error::ApiError;
use crate::jobs::{Job, JobKind, JobStatus};
use crate::pipeline::{self, canonical_space, latest_embedding, latest_metrics, JobRequest, RegressionArtifact};
use crate::AppState;

/// Most embedding spaces compared side by side.
pub const MAX_COMPARED_SPACES: usize = 3;

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/datasets", get(list_datasets).post(add_dataset))
        .route("/api/jobs", get(list_jobs).post(submit_job))
        .route("/api/jobs/{id}", get(get_job).delete(cancel_job))
        .route("/api/metrics/{dataset}", get(metrics))
        .route("/api/graph/{dataset}", get(graph))
        .route("/api/regression/{dataset}", get(regression))
        .route("/api/structure", get(structure))
        .route("/api/rankings", get(rankings))
        .route("/api/projection/{id}", get(projection))
        .route("/api/stream/projection/{id}", get(stream_projection))
        .route("/api/stats", get(stats))
        .with_state(state)
}

/// Runs blocking work (file I/O, graph loading) off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker panicked: {e}")))?
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn health() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn list_datasets(State(app): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let list = blocking(move || Ok(app.registry.list())).await?;
    Ok(Json(serde_json::to_value(list).expect("datasets serialize")))
}

async fn add_dataset(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let new: NewDataset = parse_json(&body)?;
    let info = blocking(move || app.registry.add(new)).await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn submit_job(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: JobRequest = parse_json(&body)?;
    let submitted = blocking(move || {
        let plan = pipeline::plan(req, &app.registry, &app.cache)?;
        Ok(app.jobs.submit(plan))
    })
    .await?;
    let status = if submitted.created {
        StatusCode::ACCEPTED
    } else {
        StatusCode::OK
    };
    Ok((status, Json(submitted.job.record())).into_response())
}

async fn list_jobs(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::to_value(app.jobs.list()).expect("jobs serialize"))
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(app.jobs.get(&id)?.record()).expect("job serializes")))
}

async fn cancel_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(serde_json::to_value(app.jobs.cancel(&id)?).expect("job serializes")))
}

async fn stats(State(app): State<Arc<AppState>>) -> Json<Value> {
    let computations: BTreeMap<&str, u64> = app
        .jobs
        .computations()
        .into_iter()
        .map(|(k, n)| (k.as_str(), n))
        .collect();
    Json(json!({
        "computations": computations,
        "jobs": app.jobs.list().len(),
        "workers": app.config.workers,
    }))
}

fn read_metrics(app: &AppState, dataset: &Dataset) -> ApiResult<(MetricsTable, String)> {
    let meta = latest_metrics(&app.cache, dataset)?;
    let key = ArtifactKey {
        dataset: meta.dataset.clone(),
        kind: JobKind::Metrics,
        config_hash: meta.config_hash.clone(),
    };
    let text = app
        .cache
        .read_string(&key)
        .map_err(|e| ApiError::internal(format!("reading metrics: {e}")))?;
    let table = MetricsTable::from_csv(&text).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((table, meta.config_hash))
}

async fn metrics(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let dataset = app.registry.get(&id)?;
        let (table, hash) = read_metrics(&app, &dataset)?;
        let normalized = normalize_metrics(&table);
        let nodes: Vec<Value> = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let values: serde_json::Map<String, Value> =
                    Metric::ALL.iter().map(|&m| (m.key().to_string(), json!(row.get(m)))).collect();
                let norm: serde_json::Map<String, Value> = Metric::ALL
                    .iter()
                    .map(|&m| (m.key().to_string(), json!(normalized[[i, m.index()]])))
                    .collect();
                json!({
                    "label": table.labels[i],
                    "community": table.communities.community_of[i],
                    "values": values,
                    "normalized": norm,
                })
            })
            .collect();
        Ok(Json(json!({
            "dataset": dataset.info.id,
            "version": dataset.info.version,
            "config_hash": hash,
            "metrics": Metric::ALL.iter().map(|m| m.key()).collect::<Vec<_>>(),
            "community_count": table.communities.community_count,
            "nodes": nodes,
        })))
    })
    .await
}

async fn graph(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        let dataset = app.registry.get(&id)?;
        let g = &dataset.graph;
        let metrics = read_metrics(&app, &dataset).ok();
        let nodes: Vec<Value> = (0..g.node_count())
            .map(|v| {
                json!({
                    "id": v,
                    "label": g.label(v),
                    "degree": g.degree(v),
                    "community": metrics.as_ref().map(|(t, _)| t.communities.community_of[v]),
                })
            })
            .collect();
        let edges: Vec<[usize; 2]> = g.edges().map(|(u, v)| [u, v]).collect();
        Ok(Json(json!({
            "dataset": dataset.info.id,
            "version": dataset.info.version,
            "config_hash": metrics.as_ref().map(|(_, h)| h.clone()),
            "nodes": nodes,
            "edges": edges,
        })))
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegressionQuery {
    space: Option<String>,
}

async fn regression(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<RegressionQuery>,
) -> ApiResult<Json<Value>> {
    blocking(move || {
        let dataset = app.registry.get(&id)?;
        let wanted = q.space.as_deref().map(canonical_space).transpose()?;
        // Latest report per space.
        let mut latest: BTreeMap<String, crate::cache::ArtifactMeta> = BTreeMap::new();
        for meta in app.cache.entries(&dataset.info.id, JobKind::Regress) {
            let Some(space) = meta.space.clone() else { continue };
            if wanted.as_ref().is_none_or(|w| *w == space) {
                latest.insert(space, meta);
            }
        }
        if latest.is_empty() {
            let space = wanted.unwrap_or_else(|| "deepwalk".to_string());
            let hint = json!({"dataset": dataset.info.id, "kind": "regress", "model": space});
            return Err(ApiError::missing(
                format!("no regression of `{}` has been computed for `{space}`", dataset.info.id),
                format!("POST /api/jobs {hint}"),
            ));
        }
        let mut reports = Vec::new();
        let mut artifacts = Vec::new();
        for (space, meta) in &latest {
            let key = ArtifactKey {
                dataset: meta.dataset.clone(),
                kind: JobKind::Regress,
                config_hash: meta.config_hash.clone(),
            };
            let bytes = app
                .cache
                .read(&key)
                .map_err(|e| ApiError::internal(format!("reading regression: {e}")))?;
            let a: RegressionArtifact =
                serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
            reports.push(json!({
                "space": space,
                "config_hash": meta.config_hash,
                "report": a.report,
                "records": a.records,
            }));
            artifacts.push(a.report);
        }
        let table = rank_features(&artifacts);
        let hashes: Vec<&str> = latest.values().map(|m| m.config_hash.as_str()).collect();
        Ok(Json(json!({
            "dataset": dataset.info.id,
            "version": dataset.info.version,
            "config_hash": hashes.join("+"),
            "reports": reports,
            "feature_table": table,
            "feature_table_csv": table.to_csv(),
        })))
    })
    .await
}

/// Picks the dataset named in a query, or the only one available.
fn resolve_dataset(app: &AppState, id: Option<String>) -> ApiResult<Arc<Dataset>> {
    match id {
        Some(id) => app.registry.get(&id),
        None => {
            let all = app.registry.list();
            match all.as_slice() {
                [only] => app.registry.get(&only.id),
                [] => Err(ApiError::not_found("no datasets available")),
                _ => Err(ApiError::bad_request("several datasets exist; pass `dataset`")),
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StructureQuery {
    dataset: Option<String>,
    model: String,
    k: Option<usize>,
    seed: Option<u64>,
}

async fn wait_terminal(job: &Job) -> JobStatus {
    let mut rx = job.subscribe();
    loop {
        rx.borrow_and_update();
        let status = job.status();
        if status.is_terminal() {
            return status;
        }
        if rx.changed().await.is_err() {
            return job.status();
        }
    }
}

async fn structure(State(app): State<Arc<AppState>>, Query(q): Query<StructureQuery>) -> ApiResult<Json<Value>> {
    let app2 = app.clone();
    let (job, dataset) = blocking(move || {
        let dataset = resolve_dataset(&app2, q.dataset)?;
        let mut params = serde_json::Map::new();
        if let Some(k) = q.k {
            params.insert("k".into(), json!(k));
        }
        if let Some(seed) = q.seed {
            params.insert("seed".into(), json!(seed));
        }
        let req = JobRequest {
            dataset: dataset.info.id.clone(),
            kind: JobKind::Structure,
            model: Some(q.model),
            params: Some(Value::Object(params)),
        };
        let plan = pipeline::plan(req, &app2.registry, &app2.cache)?;
        Ok((app2.jobs.submit(plan).job, dataset))
    })
    .await?;
    if wait_terminal(&job).await != JobStatus::Done {
        let msg = job.record().error_message.unwrap_or_else(|| "structure job failed".into());
        return Err(ApiError::internal(msg));
    }
    let key = job.plan.key();
    let bytes = blocking(move || {
        app.cache
            .read(&key)
            .map_err(|e| ApiError::internal(format!("reading structure: {e}")))
    })
    .await?;
    let mut body: Value = serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
    let obj = body.as_object_mut().expect("structure report is an object");
    obj.insert("dataset".into(), json!(dataset.info.id));
    obj.insert("version".into(), json!(dataset.info.version));
    obj.insert("config_hash".into(), json!(job.plan.config_hash));
    obj.insert("job_id".into(), json!(job.id()));
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RankingQuery {
    dataset: Option<String>,
    anchor: String,
    space: String,
    measure: Option<String>,
    k: Option<i64>,
    order_by: Option<String>,
    /// Comma-separated embedding spaces counted for cross-space presence.
    compare: Option<String>,
}

async fn rankings(State(app): State<Arc<AppState>>, Query(q): Query<RankingQuery>) -> ApiResult<Json<Value>> {
    blocking(move || ranking_response(&app, q)).await.map(Json)
}

fn ranking_response(app: &AppState, q: RankingQuery) -> ApiResult<Value> {
    let measure: Measure = q
        .measure
        .as_deref()
        .unwrap_or("euclidean")
        .parse()
        .map_err(|e: embedlens_core::Error| ApiError::bad_request(e.to_string()))?;
    let k = match q.k {
        None => DEFAULT_LIST_LENGTH,
        Some(k) if k >= 1 => k as usize,
        Some(k) => return Err(ApiError::bad_request(format!("k must be positive, got {k}"))),
    };
    let order_by: GraphOrder = q
        .order_by
        .as_deref()
        .unwrap_or("shared_friends")
        .parse()
        .map_err(|e: embedlens_core::Error| ApiError::bad_request(e.to_string()))?;
    let dataset = resolve_dataset(app, q.dataset)?;
    let g = &dataset.graph;
    let anchor = g
        .node_by_label(&q.anchor)
        .ok_or_else(|| ApiError::not_found(format!("unknown node `{}`", q.anchor)))?;
    let (table, metrics_hash) = read_metrics(app, &dataset)?;
    let bad = |e: embedlens_core::Error| ApiError::bad_request(e.to_string());
    let ideal = rank_graph_space(g, &table, anchor, order_by, k).map_err(bad)?;

    let mut compared: Vec<String> = match &q.compare {
        Some(list) => list
            .split(',')
            .filter(|s| !s.is_empty())
            .map(canonical_space)
            .collect::<ApiResult<_>>()?,
        None => Vec::new(),
    };
    let current = if q.space == "graph" {
        None
    } else {
        Some(canonical_space(&q.space)?)
    };
    if let Some(c) = &current {
        if !compared.contains(c) {
            compared.insert(0, c.clone());
        }
    }
    if q.compare.is_none() {
        // Fill with the most recently embedded other spaces.
        for meta in app.cache.entries(&dataset.info.id, JobKind::Embed).iter().rev() {
            if compared.len() >= MAX_COMPARED_SPACES {
                break;
            }
            if let Some(s) = &meta.space {
                if !compared.contains(s) {
                    compared.push(s.clone());
                }
            }
        }
    }
    compared.dedup();
    if compared.len() > MAX_COMPARED_SPACES {
        return Err(ApiError::bad_request(format!(
            "at most {MAX_COMPARED_SPACES} embedding spaces can be compared"
        )));
    }
    let mut lists: Vec<RankingList> = Vec::new();
    let mut hash = metrics_hash;
    for space in &compared {
        let meta = latest_embedding(&app.cache, &dataset, space)?;
        let key = ArtifactKey {
            dataset: meta.dataset.clone(),
            kind: JobKind::Embed,
            config_hash: meta.config_hash.clone(),
        };
        let e = pipeline::load_embedding(&app.cache, &key, space, &dataset).map_err(ApiError::internal)?;
        if current.as_ref() == Some(space) {
            hash = meta.config_hash.clone();
        }
        lists.push(rank_embedding_space(&e, anchor, measure, k).map_err(bad)?);
    }
    let presented = match &current {
        Some(c) => {
            let i = compared.iter().position(|s| s == c).expect("current space is compared");
            lists[i].clone()
        }
        None => ideal.clone(),
    };
    let score = ndcg(&presented, &ideal, k).map_err(bad)?;
    let refs: Vec<&RankingList> = lists.iter().collect();
    let result = annotate_ranking(g, &normalize_metrics(&table), &presented, score, &refs).map_err(bad)?;
    let mut body = serde_json::to_value(result).expect("ranking serializes");
    let obj = body.as_object_mut().expect("ranking is an object");
    obj.insert("dataset".into(), json!(dataset.info.id));
    obj.insert("version".into(), json!(dataset.info.version));
    obj.insert("config_hash".into(), json!(hash));
    obj.insert("order_by".into(), json!(order_by.to_string()));
    obj.insert("compared_spaces".into(), json!(compared));
    Ok(body)
}

fn projection_job(app: &AppState, id: &str) -> ApiResult<Arc<Job>> {
    let job = app.jobs.get(id)?;
    if job.plan.kind != JobKind::Project {
        return Err(ApiError::not_found(format!("job `{id}` is not a projection")));
    }
    Ok(job)
}

async fn projection(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let job = projection_job(&app, &id)?;
    let record = job.record();
    let count = job.snapshot_count();
    let latest = count.checked_sub(1).and_then(|i| job.snapshot(i));
    Ok(Json(json!({
        "job_id": record.job_id,
        "status": record.status,
        "dataset": record.dataset,
        "version": job.plan.dataset.info.version,
        "config_hash": record.config_hash,
        "space_id": record.model,
        "labels": job.plan.dataset.graph.labels(),
        "snapshots": count,
        "latest": latest,
        "final": (record.status == JobStatus::Done).then_some(latest.clone()).flatten(),
    })))
}

struct StreamState {
    job: Arc<Job>,
    rx: tokio::sync::watch::Receiver<u64>,
    next: usize,
    finished: bool,
}

fn error_event(message: &str) -> Event {
    Event::default()
        .event("error")
        .data(json!({"message": message}).to_string())
}

/// `snapshot` events carry 1-based ids; a `Last-Event-ID` header (or
/// `last_event_id` query) resumes after that event.
async fn stream_projection(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let job = projection_job(&app, &id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .or_else(|| q.get("last_event_id").cloned());
    let next = match resume {
        Some(s) => s
            .trim()
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("invalid last event id `{s}`")))?,
        None => 0,
    };
    let already_failed = job.status() == JobStatus::Failed;
    let state = StreamState {
        rx: job.subscribe(),
        job,
        next,
        finished: false,
    };
    let stream = futures::stream::unfold(state, move |mut st| async move {
        if st.finished {
            return None;
        }
        if already_failed {
            st.finished = true;
            let msg = st.job.record().error_message.unwrap_or_else(|| "failed".into());
            return Some((Ok(error_event(&msg)), st));
        }
        loop {
            st.rx.borrow_and_update();
            if let Some(snap) = st.job.snapshot(st.next) {
                st.next += 1;
                let ev = Event::default()
                    .event("snapshot")
                    .id(st.next.to_string())
                    .data(serde_json::to_string(&snap).expect("snapshot serializes"));
                return Some((Ok(ev), st));
            }
            let record = st.job.record();
            match record.status {
                JobStatus::Done => {
                    st.finished = true;
                    let data = json!({"job_id": record.job_id, "snapshots": st.job.snapshot_count()});
                    return Some((Ok(Event::default().event("done").data(data.to_string())), st));
                }
                JobStatus::Failed => {
                    st.finished = true;
                    let msg = record.error_message.unwrap_or_else(|| "failed".into());
                    return Some((Ok(error_event(&msg)), st));
                }
                JobStatus::Queued | JobStatus::Running => {
                    if st.rx.changed().await.is_err() {
                        st.finished = true;
                        return Some((Ok(error_event("job abandoned")), st));
                    }
                }
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
