#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use embedlens_service::{AppState, ServiceConfig};
use serde_json::{json, Value};

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub state: Arc<AppState>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Server {
    pub async fn start(data_dir: &Path, workers: usize) -> Server {
        let config = ServiceConfig {
            data_dir: data_dir.to_path_buf(),
            port: 0,
            workers,
        };
        let state = AppState::open(config).expect("open state");
        let listener = embedlens_service::bind(0).await.expect("bind");
        let port = listener.local_addr().unwrap().port();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let serving = state.clone();
        tokio::spawn(async move {
            embedlens_service::serve(listener, serving, async {
                let _ = rx.await;
            })
            .await
            .expect("serve");
        });
        Server {
            base: format!("http://127.0.0.1:{port}"),
            client: reqwest::Client::new(),
            state,
            shutdown: Some(tx),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(self.url(path)).send().await.expect("GET");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let r = self.client.post(self.url(path)).json(body).send().await.expect("POST");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn post_raw(&self, path: &str, body: &str) -> (u16, Value) {
        let r = self
            .client
            .post(self.url(path))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .await
            .expect("POST");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn delete(&self, path: &str) -> (u16, Value) {
        let r = self.client.delete(self.url(path)).send().await.expect("DELETE");
        let status = r.status().as_u16();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    pub async fn submit(&self, body: Value) -> Value {
        let (status, job) = self.post("/api/jobs", &body).await;
        assert!(status == 200 || status == 202, "submit {body}: {status} {job}");
        job
    }

    /// Polls a job until it finishes; panics on failure or timeout.
    pub async fn wait_done(&self, job_id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(300);
        loop {
            let (status, job) = self.get(&format!("/api/jobs/{job_id}")).await;
            assert_eq!(status, 200, "{job}");
            match job["status"].as_str() {
                Some("done") => return job,
                Some("failed") => panic!("job {job_id} failed: {job}"),
                _ => {}
            }
            assert!(Instant::now() < deadline, "job {job_id} timed out");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }

    pub async fn run(&self, body: Value) -> Value {
        let job = self.submit(body).await;
        self.wait_done(job["job_id"].as_str().unwrap()).await
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.state.jobs.shutdown();
    }
}

/// A small connected Barabási–Albert dataset.
pub fn ba_dataset(id: &str, n: usize) -> Value {
    json!({"id": id, "synthetic": {"kind": "barabasi_albert", "n": n, "ba_m": 2, "seed": 3}})
}

/// Walk settings small enough for tests.
pub fn quick_embed(model: &str) -> Value {
    json!({"walks_per_node": 4, "walk_length": 12, "window": 3, "dimension": 8, "epochs": 1})
        .as_object()
        .cloned()
        .map(|mut m| {
            if model == "node2vec" {
                m.insert("p".into(), json!(1.0));
                m.insert("q".into(), json!(0.5));
            }
            Value::Object(m)
        })
        .unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<String>,
    pub data: String,
}

/// Reads a server-sent event stream to its end.
pub async fn read_sse(resp: reqwest::Response) -> Vec<SseEvent> {
    read_sse_until(resp, |_| false).await
}

/// Reads events until the stream ends or `stop` returns true for an event.
pub async fn read_sse_until(mut resp: reqwest::Response, mut stop: impl FnMut(&SseEvent) -> bool) -> Vec<SseEvent> {
    let mut buf = String::new();
    let mut events = Vec::new();
    loop {
        while let Some(pos) = buf.find("\n\n") {
            let block: String = buf.drain(..pos + 2).collect();
            let mut ev = SseEvent {
                event: "message".into(),
                id: None,
                data: String::new(),
            };
            let mut has_field = false;
            for line in block.lines() {
                if line.starts_with(':') || line.is_empty() {
                    continue;
                }
                let (field, value) = line.split_once(':').unwrap_or((line, ""));
                let value = value.strip_prefix(' ').unwrap_or(value);
                has_field = true;
                match field {
                    "event" => ev.event = value.to_string(),
                    "id" => ev.id = Some(value.to_string()),
                    "data" => {
                        if !ev.data.is_empty() {
                            ev.data.push('\n');
                        }
                        ev.data.push_str(value);
                    }
                    _ => {}
                }
            }
            if has_field {
                let done = stop(&ev);
                events.push(ev);
                if done {
                    return events;
                }
            }
        }
        match tokio::time::timeout(Duration::from_secs(300), resp.chunk()).await {
            Ok(Ok(Some(bytes))) => buf.push_str(&String::from_utf8_lossy(&bytes).replace("\r\n", "\n")),
            Ok(Ok(None)) => return events,
            Ok(Err(e)) => panic!("stream error: {e}"),
            Err(_) => panic!("stream stalled"),
        }
    }
}

pub fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

const VALIDATOR: &str = r#"
import json, sys
try:
    import jsonschema
except ImportError:
    print("SKIP")
    sys.exit(0)
cases = json.load(open(sys.argv[1]))
bad = []
for schema_path, instance in cases:
    schema = json.load(open(schema_path))
    for err in jsonschema.Draft202012Validator(schema).iter_errors(instance):
        bad.append(f"{schema_path}: {list(err.absolute_path)}: {err.message}")
print("\n".join(bad) if bad else "OK")
"#;

/// Validates each `(schema name, instance)` pair against `schemas/<name>.schema.json`.
/// Skips with a notice when python3 or its `jsonschema` package is missing.
pub fn validate_all(cases: &[(&str, Value)]) {
    let dir = tempfile::tempdir().unwrap();
    let payload: Vec<Value> = cases
        .iter()
        .map(|(name, v)| {
            let path = schema_dir().join(format!("{name}.schema.json"));
            assert!(path.is_file(), "no schema {name}");
            json!([path, v])
        })
        .collect();
    let file = dir.path().join("cases.json");
    std::fs::write(&file, serde_json::to_vec(&payload).unwrap()).unwrap();
    let out = match Command::new("python3").arg("-c").arg(VALIDATOR).arg(&file).output() {
        Ok(out) => out,
        Err(e) => {
            eprintln!("schema validation skipped: python3 unavailable ({e})");
            return;
        }
    };
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "validator crashed: {}", String::from_utf8_lossy(&out.stderr));
    match stdout.trim() {
        "OK" => {}
        "SKIP" => eprintln!("schema validation skipped: python jsonschema not installed"),
        errors => panic!("schema violations:\n{errors}"),
    }
}
