mod common;

use std::collections::BTreeSet;

use common::{ba_dataset, quick_embed, read_sse, read_sse_until, validate_all, Server};
use serde_json::{json, Value};

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn datasets_list_grows_and_rejects_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), 1).await;

    let (status, empty) = s.get("/api/datasets").await;
    assert_eq!(status, 200);
    assert_eq!(empty, json!([]));

    let (status, info) = s.post("/api/datasets", &ba_dataset("ba", 40)).await;
    assert_eq!(status, 201, "{info}");
    assert_eq!(info["nodes"], 40);
    assert_eq!(info["source"], "synthetic");

    let (status, edges) = s
        .post("/api/datasets", &json!({"id": "tiny", "edge_list": "a b\nb c\nc a\nx y\n"}))
        .await;
    assert_eq!(status, 201, "{edges}");
    assert_eq!(edges["nodes"], 5);
    assert_eq!(edges["component_nodes"], 3);

    let (_, list) = s.get("/api/datasets").await;
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["ba", "tiny"]);

    let (status, dup) = s.post("/api/datasets", &ba_dataset("ba", 40)).await;
    assert_eq!(status, 409);
    let (status, bad_id) = s.post("/api/datasets", &ba_dataset("../x", 40)).await;
    assert_eq!(status, 400);
    let (status, both) = s
        .post("/api/datasets", &json!({"id": "z", "edge_list": "a b", "synthetic": {"kind": "barabasi_albert", "n": 5}}))
        .await;
    assert_eq!(status, 400);
    let (status, unknown) = s.post("/api/datasets", &json!({"id": "z", "extra": 1})).await;
    assert_eq!(status, 400);

    validate_all(&[
        ("datasets", empty),
        ("dataset", info),
        ("datasets", list),
        ("error", dup),
        ("error", bad_id),
        ("error", both),
        ("error", unknown),
    ]);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn job_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), 1).await;
    s.post("/api/datasets", &ba_dataset("ba", 30)).await;

    let (status, missing) = s
        .post("/api/jobs", &json!({"dataset": "nope", "kind": "embed", "model": "deepwalk"}))
        .await;
    assert_eq!(status, 404, "{missing}");

    let (status, no_pq) = s
        .post("/api/jobs", &json!({"dataset": "ba", "kind": "embed", "model": "node2vec"}))
        .await;
    assert_eq!(status, 400, "{no_pq}");

    let (status, unknown_param) = s
        .post("/api/jobs", &json!({"dataset": "ba", "kind": "embed", "model": "deepwalk", "params": {"walkz": 3}}))
        .await;
    assert_eq!(status, 400, "{unknown_param}");

    let (status, unknown_kind) = s.post("/api/jobs", &json!({"dataset": "ba", "kind": "paint"})).await;
    assert_eq!(status, 400, "{unknown_kind}");

    let (status, malformed) = s.post_raw("/api/jobs", "{not json").await;
    assert_eq!(status, 400, "{malformed}");

    let (status, bad_value) = s
        .post("/api/jobs", &json!({"dataset": "ba", "kind": "embed", "model": "deepwalk", "params": {"dimension": 0}}))
        .await;
    assert_eq!(status, 400, "{bad_value}");

    let (status, no_embedding) = s
        .post("/api/jobs", &json!({"dataset": "ba", "kind": "project", "model": "struc2vec"}))
        .await;
    assert_eq!(status, 409, "{no_embedding}");
    let hint = no_embedding["hint"].as_str().unwrap();
    assert!(hint.contains("\"kind\":\"embed\"") && hint.contains("struc2vec"), "{hint}");

    let (status, no_metrics) = s.get("/api/metrics/ba").await;
    assert_eq!(status, 409);
    assert!(no_metrics["hint"].as_str().unwrap().contains("\"kind\":\"metrics\""));

    let (status, _) = s.get("/api/metrics/nope").await;
    assert_eq!(status, 404);
    let (status, _) = s.get("/api/jobs/nope").await;
    assert_eq!(status, 404);
    let (status, _) = s.get("/api/regression/ba").await;
    assert_eq!(status, 409);

    validate_all(&[
        ("error", missing),
        ("error", no_pq),
        ("error", unknown_param),
        ("error", unknown_kind),
        ("error", malformed),
        ("error", bad_value),
        ("error", no_embedding),
        ("error", no_metrics),
    ]);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn identical_requests_share_one_job_and_one_computation() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), 2).await;
    s.post("/api/datasets", &ba_dataset("ba", 40)).await;
    let body = json!({"dataset": "ba", "kind": "embed", "model": "deepwalk", "params": quick_embed("deepwalk")});

    let posts = (0..8).map(|_| s.post("/api/jobs", &body));
    let results = futures::future::join_all(posts).await;
    let ids: BTreeSet<String> = results.iter().map(|(_, j)| j["job_id"].as_str().unwrap().to_string()).collect();
    assert_eq!(ids.len(), 1, "{results:?}");
    let created = results.iter().filter(|(status, _)| *status == 202).count();
    assert_eq!(created, 1);

    let id = ids.into_iter().next().unwrap();
    let done = s.wait_done(&id).await;
    assert_eq!(done["progress"], 1.0);
    let again = s.submit(body.clone()).await;
    assert_eq!(again["job_id"], id.as_str());

    let (_, stats) = s.get("/api/stats").await;
    assert_eq!(stats["computations"]["embed"], 1);

    // Artifact on disk in the word2vec text format.
    let hash = done["config_hash"].as_str().unwrap().to_string();
    let path = dir.path().join("cache/ba/embed").join(format!("{hash}.txt"));
    let bytes = std::fs::read(&path).unwrap();
    assert!(String::from_utf8_lossy(&bytes).starts_with("40 8\n"));

    validate_all(&[("job", done), ("stats", stats)]);
    s.stop().await;

    // A fresh process over the same data directory serves from the cache.
    let s = Server::start(dir.path(), 1).await;
    let cached = s.submit(body).await;
    assert_eq!(cached["status"], "done");
    assert_eq!(cached["cached"], true);
    assert_eq!(cached["config_hash"], hash);
    let (_, stats) = s.get("/api/stats").await;
    assert_eq!(stats["computations"]["embed"], 0);
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn different_parameters_are_different_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), 1).await;
    s.post("/api/datasets", &ba_dataset("ba", 30)).await;
    let mut params = quick_embed("deepwalk");
    let a = s.submit(json!({"dataset": "ba", "kind": "embed", "model": "deepwalk", "params": params})).await;
    params["seed"] = json!(9);
    let b = s.submit(json!({"dataset": "ba", "kind": "embed", "model": "deepwalk", "params": params})).await;
    assert_ne!(a["job_id"], b["job_id"]);
    assert_ne!(a["config_hash"], b["config_hash"]);
    s.wait_done(a["job_id"].as_str().unwrap()).await;
    s.wait_done(b["job_id"].as_str().unwrap()).await;
    let (_, stats) = s.get("/api/stats").await;
    assert_eq!(stats["computations"]["embed"], 2);
    s.stop().await;
}

async fn prepared(dir: &std::path::Path, n: usize) -> Server {
    let s = Server::start(dir, 2).await;
    s.post("/api/datasets", &ba_dataset("ba", n)).await;
    s.run(json!({"dataset": "ba", "kind": "metrics"})).await;
    s
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn projection_streams_every_snapshot_then_done() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path(), 40).await;
    let job = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000, "snapshot_stride": 10, "perplexity": 10}}))
        .await;
    let id = job["job_id"].as_str().unwrap().to_string();

    let resp = s.client.get(s.url(&format!("/api/stream/projection/{id}"))).send().await.unwrap();
    assert_eq!(resp.status(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    let events = read_sse(resp).await;
    let snapshots: Vec<&common::SseEvent> = events.iter().filter(|e| e.event == "snapshot").collect();
    assert_eq!(snapshots.len(), 100);
    assert_eq!(events.len(), 101);
    assert_eq!(events.last().unwrap().event, "done");
    let mut last_iteration = 0;
    for (i, e) in snapshots.iter().enumerate() {
        assert_eq!(e.id.as_deref(), Some((i + 1).to_string().as_str()));
        let snap: Value = serde_json::from_str(&e.data).unwrap();
        let it = snap["iteration"].as_u64().unwrap();
        assert!(it > last_iteration);
        last_iteration = it;
        assert_eq!(snap["coords"].as_array().unwrap().len(), 40);
        assert_eq!(snap["space_id"], "graph");
    }
    assert_eq!(last_iteration, 1000);

    // Resume after the 40th event.
    let resumed = s
        .client
        .get(s.url(&format!("/api/stream/projection/{id}")))
        .header("Last-Event-ID", "40")
        .send()
        .await
        .unwrap();
    let rest = read_sse(resumed).await;
    assert_eq!(rest[0].id.as_deref(), Some("41"));
    assert_eq!(rest[0].data, snapshots[40].data);
    assert_eq!(rest.len(), 61);

    let (status, bad_resume) = s.get(&format!("/api/stream/projection/{id}?last_event_id=x")).await;
    assert_eq!(status, 400, "{bad_resume}");

    let (_, projection) = s.get(&format!("/api/projection/{id}")).await;
    assert_eq!(projection["snapshots"], 100);
    assert_eq!(projection["final"]["iteration"], 1000);

    // Resubmitting replays the cached snapshots without recomputing.
    let again = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000, "snapshot_stride": 10, "perplexity": 10}}))
        .await;
    assert_eq!(again["job_id"], id.as_str());
    let (_, stats) = s.get("/api/stats").await;
    assert_eq!(stats["computations"]["project"], 1);

    let mut cases = vec![
        ("projection", projection),
        ("stream_done", serde_json::from_str(&events[100].data).unwrap()),
    ];
    for e in snapshots.iter().take(5) {
        cases.push(("snapshot", serde_json::from_str(&e.data).unwrap()));
    }
    let hash = job["config_hash"].as_str().unwrap();
    let artifact: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join(format!("cache/ba/project/{hash}.json"))).unwrap()).unwrap();
    cases.push(("projection_artifact", artifact));
    validate_all(&cases);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn killed_projection_ends_stream_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path(), 40).await;
    let job = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000000, "snapshot_stride": 10, "perplexity": 10}}))
        .await;
    let id = job["job_id"].as_str().unwrap().to_string();
    let resp = s.client.get(s.url(&format!("/api/stream/projection/{id}"))).send().await.unwrap();

    let mut killed = false;
    let events = read_sse_until(resp, |e| {
        if e.event == "snapshot" && !killed {
            killed = true;
            let client = s.client.clone();
            let url = s.url(&format!("/api/jobs/{id}"));
            tokio::spawn(async move { client.delete(url).send().await.unwrap() });
        }
        e.event != "snapshot"
    })
    .await;
    let last = events.last().unwrap();
    assert_eq!(last.event, "error");
    let body: Value = serde_json::from_str(&last.data).unwrap();
    assert_eq!(body["message"], "killed");

    let (_, record) = s.get(&format!("/api/jobs/{id}")).await;
    assert_eq!(record["status"], "failed");
    assert_eq!(record["error_message"], "killed");

    // A late subscriber sees exactly one error event.
    let resp = s.client.get(s.url(&format!("/api/stream/projection/{id}"))).send().await.unwrap();
    let late = read_sse(resp).await;
    assert_eq!(late.len(), 1);
    assert_eq!(late[0].event, "error");

    // Resubmitting after failure starts a new attempt.
    let retry = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000000, "snapshot_stride": 10, "perplexity": 10}}))
        .await;
    assert_ne!(retry["job_id"], id.as_str());
    s.delete(&format!("/api/jobs/{}", retry["job_id"].as_str().unwrap())).await;

    validate_all(&[("job", record), ("stream_error", body)]);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn analysis_endpoints_serve_module_results() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path(), 60).await;
    for model in ["deepwalk", "struc2vec", "node2vec"] {
        s.run(json!({"dataset": "ba", "kind": "embed", "model": model, "params": quick_embed(model)}))
            .await;
    }
    let n2v = "node2vec_p1_q0.5";

    let (status, metrics) = s.get("/api/metrics/ba").await;
    assert_eq!(status, 200);
    assert_eq!(metrics["nodes"].as_array().unwrap().len(), 60);
    assert!(metrics["version"].is_string() && metrics["config_hash"].is_string());

    let (status, graph) = s.get("/api/graph/ba").await;
    assert_eq!(status, 200);
    assert_eq!(graph["edges"].as_array().unwrap().len(), s.state.registry.get("ba").unwrap().graph.edge_count());

    let (status, structure) = s.get(&format!("/api/structure?k=3&model={n2v}")).await;
    assert_eq!(status, 200, "{structure}");
    let clusters = structure["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 3);
    assert!(clusters.iter().all(|c| c["average_distance_vector"].is_array()));
    let (status, _) = s.get("/api/structure?k=3&model=node2vec_p2_q2").await;
    assert_eq!(status, 409);
    let (status, _) = s.get("/api/structure?k=0&model=deepwalk").await;
    assert_eq!(status, 400);

    let (status, ranking) = s
        .get("/api/rankings?anchor=20&space=struc2vec&measure=euclidean&k=50")
        .await;
    assert_eq!(status, 200, "{ranking}");
    let ndcg = ranking["ndcg"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ndcg));
    assert_eq!(ranking["entries"].as_array().unwrap().len(), 50);
    assert_eq!(ranking["compared_spaces"].as_array().unwrap().len(), 3);
    let (status, graph_rank) = s.get("/api/rankings?dataset=ba&anchor=20&space=graph&k=10").await;
    assert_eq!(status, 200);
    assert_eq!(graph_rank["ndcg"], 1.0);
    let (status, _) = s.get("/api/rankings?anchor=20&space=deepwalk&k=0").await;
    assert_eq!(status, 400);
    let (status, _) = s.get("/api/rankings?anchor=nobody&space=deepwalk").await;
    assert_eq!(status, 404);
    let (status, _) = s.get("/api/rankings?anchor=20&space=deepwalk&measure=manhattan").await;
    assert_eq!(status, 400);
    let (status, _) = s
        .get(&format!("/api/rankings?anchor=20&space=deepwalk&compare=deepwalk,struc2vec,{n2v},node2vec_p2_q2"))
        .await;
    assert_eq!(status, 400);

    let regress = json!({"dataset": "ba", "kind": "regress", "model": "deepwalk", "params": {"max_pairs": null}});
    s.run(regress).await;
    let (status, regression) = s.get("/api/regression/ba?space=deepwalk").await;
    assert_eq!(status, 200, "{regression}");
    let reports = regression["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["records"].as_array().unwrap().len(), 3);

    let (_, stats) = s.get("/api/stats").await;
    let (_, jobs) = s.get("/api/jobs").await;
    validate_all(&[
        ("metrics", metrics),
        ("graph", graph),
        ("structure", structure),
        ("rankings", ranking),
        ("rankings", graph_rank),
        ("regression", regression),
        ("stats", stats),
        ("jobs", jobs),
    ]);
    s.stop().await;
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn queued_job_can_be_cancelled() {
    let dir = tempfile::tempdir().unwrap();
    let s = prepared(dir.path(), 40).await;
    // Two projections of the same space run one at a time.
    let first = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000000, "perplexity": 10}}))
        .await;
    let second = s
        .submit(json!({"dataset": "ba", "kind": "project", "model": "graph",
                       "params": {"iterations": 1000000, "perplexity": 10, "seed": 1}}))
        .await;
    let (status, cancelled) = s.delete(&format!("/api/jobs/{}", second["job_id"].as_str().unwrap())).await;
    assert_eq!(status, 200);
    assert_eq!(cancelled["status"], "failed");
    s.delete(&format!("/api/jobs/{}", first["job_id"].as_str().unwrap())).await;
    let (_, after) = s.get(&format!("/api/jobs/{}", second["job_id"].as_str().unwrap())).await;
    assert_eq!(after["status"], "failed");
    s.stop().await;
}
