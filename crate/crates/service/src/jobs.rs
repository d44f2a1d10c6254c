//! Cook jobs: a bounded worker pool, per-job state history for progress
//! streams, and persistence under the store's `jobs/` directory.
//!
//! Every accepted state change is appended to the job's history. A stream
//! subscriber starts from the latest entry and then sees every later entry
//! in order, so no phase change is lost to coalescing.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Semaphore};
use tracing::{info, warn};
use vdcook_core::cooking::{CookOptions, CookPhase, CookProgress};
use vdcook_core::model::canonical;
use vdcook_core::store::write_atomic;
use vdcook_core::{CookRequest, Engine, Timestamp};

use crate::error::ApiError;

pub const DEFAULT_WORKERS: usize = 2;
pub const RESTART_ERROR: &str = "service restarted before the job finished";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobPhase {
    Queued,
    Expanding,
    Retrieving,
    Synthesizing,
    Filtering,
    Packaging,
    Done,
    Failed,
}

impl JobPhase {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobPhase::Done | JobPhase::Failed)
    }
}

impl From<CookPhase> for JobPhase {
    fn from(p: CookPhase) -> Self {
        match p {
            CookPhase::Expanding => JobPhase::Expanding,
            CookPhase::Retrieving => JobPhase::Retrieving,
            CookPhase::Synthesizing => JobPhase::Synthesizing,
            CookPhase::Filtering => JobPhase::Filtering,
            CookPhase::Packaging => JobPhase::Packaging,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobCounts {
    pub retrieved: u32,
    pub synthesized: u32,
    pub dropped_by_policy: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: String,
    /// Submission order, used for stable listings.
    pub seq: u64,
    pub phase: JobPhase,
    pub progress: f64,
    pub counts: JobCounts,
    pub error: Option<String>,
    pub manifest_path: Option<String>,
    /// Job id recorded inside the manifest, once known.
    pub manifest_job_id: Option<String>,
    pub dry_run: bool,
    pub request: CookRequest,
    pub submitted_time: Timestamp,
}

struct Job {
    history: Mutex<Vec<JobState>>,
    version: watch::Sender<usize>,
}

impl Job {
    fn new(state: JobState) -> Job {
        Job { history: Mutex::new(vec![state]), version: watch::channel(1).0 }
    }

    fn latest(&self) -> JobState {
        self.history.lock().unwrap().last().cloned().expect("history is never empty")
    }

    /// Applies `f` to a copy of the latest state and records it if the
    /// result is a legal successor: phases never move backwards, progress
    /// never decreases and nothing follows a terminal state. `before_publish`
    /// sees the new state before any reader can.
    fn update(&self, f: impl FnOnce(&mut JobState), before_publish: impl FnOnce(&JobState)) -> Option<JobState> {
        let mut history = self.history.lock().unwrap();
        let current = history.last().expect("history is never empty");
        if current.phase.is_terminal() {
            return None;
        }
        let mut next = current.clone();
        f(&mut next);
        if next.phase != JobPhase::Failed && next.phase < current.phase {
            next.phase = current.phase;
        }
        next.progress = next.progress.clamp(current.progress, 1.0);
        if next == *current {
            return None;
        }
        before_publish(&next);
        history.push(next.clone());
        let len = history.len();
        drop(history);
        self.version.send_replace(len);
        Some(next)
    }
}

pub struct JobManager {
    engine: Arc<Engine>,
    jobs: Mutex<BTreeMap<String, Arc<Job>>>,
    permits: Arc<Semaphore>,
    next_seq: AtomicU64,
    dir: PathBuf,
}

impl JobManager {
    /// Loads persisted jobs. Jobs that were still queued or running are
    /// marked failed, since their worker is gone.
    pub fn open(engine: Arc<Engine>, workers: usize) -> std::io::Result<JobManager> {
        let dir = engine.store().jobs_dir();
        std::fs::create_dir_all(&dir)?;
        let mut jobs = BTreeMap::new();
        let mut max_seq = 0;
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
            if !name.ends_with(".json") || name.ends_with(".manifest.json") {
                continue;
            }
            let mut state: JobState = match std::fs::read_to_string(&path).map(|t| serde_json::from_str(&t)) {
                Ok(Ok(state)) => state,
                _ => {
                    warn!(file = %path.display(), "skipping unreadable job file");
                    continue;
                }
            };
            if !state.phase.is_terminal() {
                state.phase = JobPhase::Failed;
                state.error = Some(RESTART_ERROR.to_owned());
                write_atomic(&path, canonical::to_string(&state).as_bytes()).map_err(std::io::Error::other)?;
            }
            max_seq = max_seq.max(state.seq + 1);
            jobs.insert(state.job_id.clone(), Arc::new(Job::new(state)));
        }
        Ok(JobManager {
            engine,
            jobs: Mutex::new(jobs),
            permits: Arc::new(Semaphore::new(workers.max(1))),
            next_seq: AtomicU64::new(max_seq),
            dir,
        })
    }

    fn job(&self, job_id: &str) -> Result<Arc<Job>, ApiError> {
        self.jobs
            .lock()
            .unwrap()
            .get(job_id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown job `{job_id}`")))
    }

    fn persist(&self, state: &JobState) {
        let path = self.dir.join(format!("{}.json", state.job_id));
        if let Err(e) = write_atomic(&path, canonical::to_string(state).as_bytes()) {
            warn!(job = %state.job_id, error = %e, "could not persist job state");
        }
    }

    pub fn state(&self, job_id: &str) -> Result<JobState, ApiError> {
        Ok(self.job(job_id)?.latest())
    }

    pub fn list(&self) -> Vec<JobState> {
        let mut all: Vec<JobState> = self.jobs.lock().unwrap().values().map(|j| j.latest()).collect();
        all.sort_by_key(|s| s.seq);
        all
    }

    /// Validates and queues a job; execution starts when a worker is free.
    pub fn submit(self: &Arc<Self>, request: CookRequest, dry_run: bool) -> Result<JobState, ApiError> {
        request.validate().map_err(ApiError::Invalid)?;
        let state = JobState {
            job_id: uuid::Uuid::new_v4().to_string(),
            seq: self.next_seq.fetch_add(1, Ordering::SeqCst),
            phase: JobPhase::Queued,
            progress: 0.0,
            counts: JobCounts::default(),
            error: None,
            manifest_path: None,
            manifest_job_id: None,
            dry_run,
            request,
            submitted_time: Timestamp::now(),
        };
        self.persist(&state);
        let job = Arc::new(Job::new(state.clone()));
        self.jobs.lock().unwrap().insert(state.job_id.clone(), job.clone());
        let manager = self.clone();
        let job_id = state.job_id.clone();
        tokio::spawn(async move {
            let Ok(_permit) = manager.permits.clone().acquire_owned().await else { return };
            let worker = manager.clone();
            let outcome = tokio::task::spawn_blocking(move || worker.run(&job_id, &job)).await;
            if let Err(e) = outcome {
                warn!(error = %e, "job worker panicked");
            }
        });
        Ok(state)
    }

    fn run(&self, job_id: &str, job: &Job) {
        info!(job = job_id, "job started");
        let request = job.latest().request.clone();
        let dry_run = job.latest().dry_run;
        let on_progress = |p: CookProgress| {
            job.update(
                |s| {
                    s.phase = p.phase.into();
                    s.progress = p.progress;
                    s.counts = JobCounts {
                        retrieved: p.retrieved,
                        synthesized: p.synthesized,
                        dropped_by_policy: p.dropped_by_policy,
                    };
                },
                |_| {},
            );
        };
        let result = if dry_run {
            self.engine.cook_only(&request, CookOptions { dry_run: true }, &on_progress).and_then(|out| {
                let path = self.dir.join(format!("{job_id}.manifest.json"));
                write_atomic(&path, out.manifest.to_canonical_json().as_bytes())?;
                Ok((out.manifest, path))
            })
        } else {
            self.engine
                .cook(&request, None, &on_progress)
                .map(|out| (out.manifest, out.package_dir.join("manifest.json")))
        };
        let finished = match result {
            Ok((manifest, path)) => job.update(
                |s| {
                    s.phase = JobPhase::Done;
                    s.progress = 1.0;
                    s.counts = JobCounts {
                        retrieved: manifest.counts.retrieved,
                        synthesized: manifest.counts.synthesized,
                        dropped_by_policy: manifest.counts.dropped_by_policy,
                    };
                    s.manifest_path = Some(path.display().to_string());
                    s.manifest_job_id = Some(manifest.job_id.clone());
                },
                |s| self.persist(s),
            ),
            Err(e) => job.update(
                |s| {
                    s.phase = JobPhase::Failed;
                    s.error = Some(e.to_string());
                },
                |s| self.persist(s),
            ),
        };
        if let Some(state) = finished {
            info!(job = job_id, phase = ?state.phase, "job finished");
        }
    }

    /// The manifest text of a finished job.
    pub fn manifest(&self, job_id: &str) -> Result<String, ApiError> {
        let state = self.state(job_id)?;
        match (&state.phase, &state.manifest_path) {
            (JobPhase::Done, Some(path)) => std::fs::read_to_string(path)
                .map_err(|e| ApiError::NotFound(format!("manifest for job `{job_id}` is unavailable: {e}"))),
            (JobPhase::Failed, _) => Err(ApiError::Conflict(format!("job `{job_id}` failed"))),
            _ => Err(ApiError::Conflict(format!("job `{job_id}` has not finished"))),
        }
    }

    /// States to stream for a subscriber: the latest one, then everything
    /// recorded after it. A finished job yields only its terminal state.
    pub fn subscribe(&self, job_id: &str) -> Result<JobSubscription, ApiError> {
        let job = self.job(job_id)?;
        let cursor = job.history.lock().unwrap().len() - 1;
        let version = job.version.subscribe();
        Ok(JobSubscription { job, cursor, version })
    }
}

pub struct JobSubscription {
    job: Arc<Job>,
    cursor: usize,
    version: watch::Receiver<usize>,
}

impl JobSubscription {
    /// The next state, waiting for one if needed. `None` after the terminal
    /// state has been returned.
    pub async fn next(&mut self) -> Option<JobState> {
        loop {
            {
                let history = self.job.history.lock().unwrap();
                if let Some(state) = history.get(self.cursor) {
                    self.cursor += 1;
                    return Some(state.clone());
                }
                if history.last().is_some_and(|s| s.phase.is_terminal()) {
                    return None;
                }
            }
            if self.version.changed().await.is_err() {
                return None;
            }
        }
    }
}
