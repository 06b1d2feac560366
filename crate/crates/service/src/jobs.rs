//! Job queue: deduplication by `(dataset, kind, config_hash)`, a pool of
//! worker threads, cancellation, and projection snapshot fan-out.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::cache::{ArtifactCache, ArtifactKey};
use crate::error::ApiError;
use crate::pipeline::{execute, Plan, Progress, ProjectionArtifact, Snapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Metrics,
    Embed,
    Project,
    Regress,
    Structure,
}

impl JobKind {
    pub const ALL: [JobKind; 5] = [
        JobKind::Metrics,
        JobKind::Embed,
        JobKind::Project,
        JobKind::Regress,
        JobKind::Structure,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            JobKind::Metrics => "metrics",
            JobKind::Embed => "embed",
            JobKind::Project => "project",
            JobKind::Regress => "regress",
            JobKind::Structure => "structure",
        }
    }

    /// File extension of the stored artifact.
    pub fn extension(self) -> &'static str {
        match self {
            JobKind::Metrics => "csv",
            JobKind::Embed => "txt",
            JobKind::Project | JobKind::Regress | JobKind::Structure => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    fn rank(self) -> u8 {
        match self {
            JobStatus::Queued => 0,
            JobStatus::Running => 1,
            JobStatus::Done | JobStatus::Failed => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.rank() == 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub dataset: String,
    /// Embedding space, or `graph` for metric-space projections.
    pub model: Option<String>,
    pub status: JobStatus,
    pub progress: f64,
    pub config_hash: String,
    pub error_message: Option<String>,
    /// Whether the artifact came from the cache without computing.
    pub cached: bool,
}

pub struct Job {
    pub plan: Plan,
    record: Mutex<JobRecord>,
    cancel: AtomicBool,
    snapshots: Mutex<Vec<Snapshot>>,
    changed: watch::Sender<u64>,
}

impl Job {
    fn new(plan: Plan, job_id: String) -> Self {
        let record = JobRecord {
            job_id,
            kind: plan.kind,
            dataset: plan.dataset.info.id.clone(),
            model: plan.space.clone(),
            status: JobStatus::Queued,
            progress: 0.0,
            config_hash: plan.config_hash.clone(),
            error_message: None,
            cached: false,
        };
        Job {
            plan,
            record: Mutex::new(record),
            cancel: AtomicBool::new(false),
            snapshots: Mutex::new(Vec::new()),
            changed: watch::channel(0).0,
        }
    }

    pub fn record(&self) -> JobRecord {
        self.record.lock().expect("job record").clone()
    }

    pub fn id(&self) -> String {
        self.record.lock().expect("job record").job_id.clone()
    }

    pub fn status(&self) -> JobStatus {
        self.record.lock().expect("job record").status
    }

    fn notify(&self) {
        self.changed.send_modify(|v| *v += 1);
    }

    /// Moves to `status` unless that would go backwards or leave a terminal state.
    fn transition(&self, status: JobStatus, error: Option<String>) -> bool {
        {
            let mut r = self.record.lock().expect("job record");
            if r.status.is_terminal() || status.rank() < r.status.rank() {
                return false;
            }
            r.status = status;
            if status == JobStatus::Done {
                r.progress = 1.0;
            }
            if error.is_some() {
                r.error_message = error;
            }
        }
        self.notify();
        true
    }

    fn set_progress(&self, p: f64) {
        {
            let mut r = self.record.lock().expect("job record");
            if r.status.is_terminal() {
                return;
            }
            r.progress = r.progress.max(p.clamp(0.0, 1.0));
        }
        self.notify();
    }

    fn push_snapshot(&self, s: Snapshot) {
        self.snapshots.lock().expect("snapshots").push(s);
        self.notify();
    }

    pub fn snapshot(&self, index: usize) -> Option<Snapshot> {
        self.snapshots.lock().expect("snapshots").get(index).cloned()
    }

    pub fn snapshot_count(&self) -> usize {
        self.snapshots.lock().expect("snapshots").len()
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.changed.subscribe()
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::SeqCst)
    }
}

#[derive(Default)]
struct Table {
    jobs: BTreeMap<String, Arc<Job>>,
    /// Latest job per artifact key.
    by_key: HashMap<ArtifactKey, String>,
    /// Attempts per artifact key, for retry suffixes.
    attempts: HashMap<ArtifactKey, usize>,
}

struct Shared {
    cache: Arc<ArtifactCache>,
    table: Mutex<Table>,
    queue: Mutex<VecDeque<Arc<Job>>>,
    wake: Condvar,
    shutdown: AtomicBool,
    computations: Mutex<BTreeMap<JobKind, u64>>,
    /// One running projection per `(dataset, space)`.
    projection_locks: Mutex<HashMap<(String, String), Arc<Mutex<()>>>>,
}

/// Outcome of a submission: the job and whether it was newly created.
pub struct Submitted {
    pub job: Arc<Job>,
    pub created: bool,
}

pub struct JobManager {
    shared: Arc<Shared>,
    workers: Mutex<Vec<thread::JoinHandle<()>>>,
}

impl JobManager {
    pub fn new(cache: Arc<ArtifactCache>, workers: usize) -> Self {
        let shared = Arc::new(Shared {
            cache,
            table: Mutex::new(Table::default()),
            queue: Mutex::new(VecDeque::new()),
            wake: Condvar::new(),
            shutdown: AtomicBool::new(false),
            computations: Mutex::new(JobKind::ALL.iter().map(|&k| (k, 0)).collect()),
            projection_locks: Mutex::new(HashMap::new()),
        });
        let handles = (0..workers.max(1))
            .map(|i| {
                let shared = shared.clone();
                thread::Builder::new()
                    .name(format!("worker-{i}"))
                    .spawn(move || worker_loop(&shared))
                    .expect("spawn worker")
            })
            .collect();
        JobManager {
            shared,
            workers: Mutex::new(handles),
        }
    }

    /// Returns the job for the plan's artifact, creating one unless a queued,
    /// running or finished job already exists. Failed jobs are retried under a
    /// new id. A cached artifact yields a finished job without computing.
    pub fn submit(&self, plan: Plan) -> Submitted {
        let key = plan.key();
        let mut table = self.shared.table.lock().expect("job table");
        if let Some(existing) = table.by_key.get(&key).and_then(|id| table.jobs.get(id)) {
            if existing.status() != JobStatus::Failed {
                return Submitted {
                    job: existing.clone(),
                    created: false,
                };
            }
        }
        let attempt = {
            let a = table.attempts.entry(key.clone()).or_insert(0);
            *a += 1;
            *a
        };
        let base = format!("{}-{}-{}", key.kind.as_str(), key.dataset, key.config_hash);
        let job_id = if attempt == 1 { base } else { format!("{base}-r{attempt}") };
        let job = Arc::new(Job::new(plan, job_id.clone()));
        table.jobs.insert(job_id.clone(), job.clone());
        table.by_key.insert(key.clone(), job_id);
        drop(table);

        if self.shared.cache.contains(&key) && self.load_cached(&job) {
            job.record.lock().expect("job record").cached = true;
            job.transition(JobStatus::Done, None);
        } else {
            self.shared.queue.lock().expect("queue").push_back(job.clone());
            self.shared.wake.notify_one();
        }
        Submitted { job, created: true }
    }

    /// Replays stored snapshots for a cached projection.
    fn load_cached(&self, job: &Job) -> bool {
        if job.plan.kind != JobKind::Project {
            return true;
        }
        let Ok(bytes) = self.shared.cache.read(&job.plan.key()) else {
            return false;
        };
        match serde_json::from_slice::<ProjectionArtifact>(&bytes) {
            Ok(a) => {
                *job.snapshots.lock().expect("snapshots") = a.snapshots;
                true
            }
            Err(e) => {
                log::warn!("cached projection unreadable, recomputing: {e}");
                false
            }
        }
    }

    pub fn get(&self, id: &str) -> Result<Arc<Job>, ApiError> {
        self.shared
            .table
            .lock()
            .expect("job table")
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown job `{id}`")))
    }

    pub fn list(&self) -> Vec<JobRecord> {
        let table = self.shared.table.lock().expect("job table");
        table.jobs.values().map(|j| j.record()).collect()
    }

    /// Requests cancellation. A queued job fails immediately; a running one
    /// fails at its next progress check. Finished jobs are left alone.
    pub fn cancel(&self, id: &str) -> Result<JobRecord, ApiError> {
        let job = self.get(id)?;
        job.cancel.store(true, Ordering::SeqCst);
        if job.status() == JobStatus::Queued {
            self.shared
                .queue
                .lock()
                .expect("queue")
                .retain(|j| !Arc::ptr_eq(j, &job));
            job.transition(JobStatus::Failed, Some("killed".into()));
        }
        Ok(job.record())
    }

    /// Number of times each kind was actually computed.
    pub fn computations(&self) -> BTreeMap<JobKind, u64> {
        self.shared.computations.lock().expect("counters").clone()
    }

    pub fn shutdown(&self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        self.shared.wake.notify_all();
        for h in self.workers.lock().expect("workers").drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        for job in self.shared.queue.lock().expect("queue").iter() {
            job.cancel.store(true, Ordering::SeqCst);
        }
        self.shared.wake.notify_all();
    }
}

fn worker_loop(shared: &Shared) {
    loop {
        let job = {
            let mut queue = shared.queue.lock().expect("queue");
            loop {
                if shared.shutdown.load(Ordering::SeqCst) {
                    return;
                }
                if let Some(job) = queue.pop_front() {
                    break job;
                }
                queue = shared.wake.wait(queue).expect("queue");
            }
        };
        run(shared, &job);
    }
}

fn run(shared: &Shared, job: &Job) {
    let plan = &job.plan;
    let projection_lock = (plan.kind == JobKind::Project).then(|| {
        let key = (plan.dataset.info.id.clone(), plan.space.clone().unwrap_or_default());
        shared
            .projection_locks
            .lock()
            .expect("projection locks")
            .entry(key)
            .or_default()
            .clone()
    });
    let _exclusive = projection_lock.as_ref().map(|l| l.lock().expect("projection lock"));
    if job.is_cancelled() {
        job.transition(JobStatus::Failed, Some("killed".into()));
        return;
    }
    if !job.transition(JobStatus::Running, None) {
        return;
    }
    *shared
        .computations
        .lock()
        .expect("counters")
        .entry(plan.kind)
        .or_default() += 1;
    log::info!("job {} started", job.id());
    let set = |p: f64| job.set_progress(p);
    let cancelled = || job.is_cancelled() || shared.shutdown.load(Ordering::SeqCst);
    let snapshot = |s: Snapshot| job.push_snapshot(s);
    let progress = Progress {
        set: &set,
        cancelled: &cancelled,
        snapshot: &snapshot,
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(plan, &shared.cache, &progress)))
        .unwrap_or_else(|_| Err("internal error".to_string()));
    match outcome {
        Ok(()) => {
            job.transition(JobStatus::Done, None);
            log::info!("job {} done", job.id());
        }
        Err(msg) => {
            log::warn!("job {} failed: {msg}", job.id());
            job.transition(JobStatus::Failed, Some(msg));
        }
    }
}
