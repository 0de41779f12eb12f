use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError, RwLock, RwLockReadGuard};

use serde::Serialize;
use serde_json::Value;
use tokio::sync::{OwnedMutexGuard, Semaphore};
use workbench_core::experiment::Experiment;
use workbench_core::{Error, Result};

use crate::error::{ApiError, ErrorBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// What a finished job left behind.
pub enum JobOutcome {
    Done(String),
    /// The job stored an error entry: `rendered` is that entry.
    Stored { rendered: String, error: ErrorBody },
    Failed(ErrorBody),
}

#[derive(Debug, Clone)]
struct Job {
    kind: &'static str,
    status: JobStatus,
    rendered: Option<String>,
    error: Option<ErrorBody>,
}

#[derive(Debug, Serialize)]
pub struct JobView {
    pub id: u64,
    pub kind: &'static str,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

/// One experiment shared by every request. Reads run concurrently;
/// experiment mutations go through `mutate` one at a time, and the
/// `writer` lock keeps a second data or model mutation from starting while
/// one is in flight.
pub struct AppState {
    exp: RwLock<Experiment>,
    persist: Option<PathBuf>,
    writer: Arc<tokio::sync::Mutex<()>>,
    jobs: Mutex<BTreeMap<u64, Job>>,
    next_job: AtomicU64,
    workers: Arc<Semaphore>,
}

pub type Shared = Arc<AppState>;

impl AppState {
    /// `persist`: where the experiment is saved after every mutation.
    pub fn new(exp: Experiment, persist: Option<PathBuf>, workers: usize) -> Shared {
        Arc::new(AppState {
            exp: RwLock::new(exp),
            persist,
            writer: Arc::new(tokio::sync::Mutex::new(())),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    /// Load the experiment at `path`, or start an empty one there.
    pub fn open(path: &Path, seed: u64, workers: usize) -> Result<Shared> {
        let exp = if path.exists() { Experiment::load(path)? } else { Experiment::new(seed) };
        Ok(AppState::new(exp, Some(path.to_path_buf()), workers))
    }

    pub fn read(&self) -> RwLockReadGuard<'_, Experiment> {
        self.exp.read().unwrap_or_else(PoisonError::into_inner)
    }

    /// Apply `f` under the write lock and persist the result.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut Experiment) -> Result<T>) -> Result<T> {
        let mut exp = self.exp.write().unwrap_or_else(PoisonError::into_inner);
        let out = f(&mut exp)?;
        if let Some(path) = &self.persist {
            exp.save(path)?;
        }
        Ok(out)
    }

    /// Claim the single data/model mutation slot, or fail with 409.
    pub fn claim_writer(&self) -> std::result::Result<OwnedMutexGuard<()>, ApiError> {
        self.writer.clone().try_lock_owned().map_err(|_| ApiError::Busy)
    }

    fn jobs(&self) -> std::sync::MutexGuard<'_, BTreeMap<u64, Job>> {
        self.jobs.lock().unwrap_or_else(PoisonError::into_inner)
    }

    fn set_status(&self, id: u64, status: JobStatus) {
        if let Some(job) = self.jobs().get_mut(&id) {
            job.status = status;
        }
    }

    fn finish(&self, id: u64, outcome: JobOutcome) {
        let mut jobs = self.jobs();
        let Some(job) = jobs.get_mut(&id) else { return };
        match outcome {
            JobOutcome::Done(rendered) => {
                job.status = JobStatus::Done;
                job.rendered = Some(rendered);
            }
            JobOutcome::Stored { rendered, error } => {
                job.status = JobStatus::Failed;
                job.rendered = Some(rendered);
                job.error = Some(error);
            }
            JobOutcome::Failed(error) => {
                job.status = JobStatus::Failed;
                job.error = Some(error);
            }
        }
    }

    /// Queue `work` on the worker pool. `guard` is released once the work
    /// returns, before the job is marked finished.
    pub fn spawn_job(
        self: &Arc<Self>,
        kind: &'static str,
        guard: Option<OwnedMutexGuard<()>>,
        work: impl FnOnce(&AppState) -> JobOutcome + Send + 'static,
    ) -> u64 {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        self.jobs().insert(id, Job { kind, status: JobStatus::Queued, rendered: None, error: None });
        let state = Arc::clone(self);
        tokio::spawn(async move {
            let _permit = state.workers.clone().acquire_owned().await.expect("the worker pool is never closed");
            state.set_status(id, JobStatus::Running);
            let worker = Arc::clone(&state);
            let outcome = tokio::task::spawn_blocking(move || work(&worker)).await.unwrap_or_else(|e| {
                JobOutcome::Failed(ApiError::from(Error::Numerical(format!("job panicked: {e}"))).body())
            });
            drop(guard);
            state.finish(id, outcome);
        });
        id
    }

    pub fn job(&self, id: u64) -> std::result::Result<JobView, ApiError> {
        let jobs = self.jobs();
        let job = jobs.get(&id).ok_or(ApiError::UnknownJob(id))?;
        let result = job.rendered.as_deref().map(|r| serde_json::from_str(r).expect("rendered results are JSON"));
        Ok(JobView { id, kind: job.kind, status: job.status, result, error: job.error.clone() })
    }

    /// The finished job's payload, exactly as rendered.
    pub fn job_result(&self, id: u64) -> std::result::Result<String, ApiError> {
        let jobs = self.jobs();
        let job = jobs.get(&id).ok_or(ApiError::UnknownJob(id))?;
        match (&job.rendered, &job.error) {
            (Some(r), _) => Ok(r.clone()),
            (None, Some(e)) => Err(ApiError::JobFailed { id, error: e.clone() }),
            (None, None) => Err(ApiError::Unfinished(id)),
        }
    }
}
