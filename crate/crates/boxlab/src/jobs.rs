//! Label runs: applying provider results to a project, and the registry of
//! asynchronous label jobs used by the service.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::{OwnedSemaphorePermit, Semaphore};

use boxlab_core::labeling::{label_batch, LabelOutcome, TokenUsage};
use boxlab_core::{Clock, Project, Provider};

use crate::filter::{FilterError, LabelFilter};
use crate::workspace::Workspace;

/// Per-annotation result of a label run, as reported to users.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub annotation_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempts: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl JobOutcome {
    fn failed(annotation_id: &str, code: &str, error: String) -> Self {
        Self {
            annotation_id: annotation_id.to_string(),
            ok: false,
            label: None,
            request_id: None,
            attempts: None,
            error_code: Some(code.to_string()),
            error: Some(error),
        }
    }
}

/// Applies labeling results to `project` through its serialized writer and
/// records token usage. A result that no longer applies (the annotation
/// moved on meanwhile) becomes a `conflict` outcome.
pub fn commit_outcomes(project: &mut Project, outcomes: Vec<LabelOutcome>) -> Vec<JobOutcome> {
    let mut requests = BTreeSet::new();
    let mut usage = TokenUsage::default();
    let mut out = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            LabelOutcome::Success { annotation, request_id, usage: item_usage, attempts } => {
                requests.insert(request_id.clone());
                usage = usage + item_usage.unwrap_or_default();
                match project.commit(&annotation) {
                    Ok(stored) => out.push(JobOutcome {
                        annotation_id: stored.id.clone(),
                        ok: true,
                        label: stored.ai_label.as_ref().map(|l| l.display()),
                        request_id: Some(request_id),
                        attempts: Some(attempts),
                        error_code: None,
                        error: None,
                    }),
                    Err(e) => out.push(JobOutcome::failed(&annotation.id, "conflict", e.to_string())),
                }
            }
            LabelOutcome::ItemError { annotation_id, error } => {
                out.push(JobOutcome::failed(&annotation_id, error.code(), error.to_string()))
            }
        }
    }
    if !requests.is_empty() {
        project.record_usage(requests.len() as u64, usage);
    }
    out
}

/// Labels the selected annotations of an open workspace in place. The caller
/// saves.
pub fn run_label(
    ws: &mut Workspace,
    filter: &LabelFilter,
    provider: &dyn Provider,
    clock: &dyn Clock,
) -> Result<Vec<JobOutcome>, FilterError> {
    let selected = filter.select(&ws.project)?;
    let images = Arc::clone(ws.images());
    let outcomes = label_batch(&ws.project.config, &selected, &images, provider, clock);
    Ok(commit_outcomes(&mut ws.project, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelJob {
    pub job_id: String,
    pub project_id: String,
    pub filter: LabelFilter,
    pub state: JobState,
    pub outcomes: Vec<JobOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub submitted_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("illegal job transition {from:?} -> {to:?}")]
    IllegalTransition { from: JobState, to: JobState },
    #[error("cannot persist job registry at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What `submit` did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Submission {
    /// A job was queued (new, or a failed job re-queued under its key); the
    /// caller must start it.
    Queued(String),
    /// The key already names a live or finished job.
    Existing(String),
}

impl Submission {
    pub fn job_id(&self) -> &str {
        match self {
            Submission::Queued(id) | Submission::Existing(id) => id,
        }
    }
}

#[derive(Default, Serialize, Deserialize)]
struct Registry {
    jobs: BTreeMap<String, LabelJob>,
    #[serde(skip)]
    keys: HashMap<(String, String), String>,
}

/// Registry of label jobs plus the worker-pool permits that bound how many
/// run at once. Optionally persisted as JSON so a restart can report jobs it
/// interrupted.
pub struct JobManager {
    registry: Mutex<Registry>,
    path: Option<PathBuf>,
    permits: Arc<Semaphore>,
}

impl JobManager {
    pub fn in_memory(workers: usize) -> Self {
        Self { registry: Mutex::new(Registry::default()), path: None, permits: Arc::new(Semaphore::new(workers.max(1))) }
    }

    /// Loads (or starts) a persisted registry. Jobs that were queued or
    /// running when the previous process stopped are marked failed; they can
    /// be resubmitted with the same idempotency key.
    pub fn open(path: &Path, workers: usize) -> Result<Self, JobError> {
        let io = |source| JobError::Io { path: path.to_path_buf(), source };
        let mut registry = match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str::<Registry>(&text)
                .map_err(|e| io(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Registry::default(),
            Err(e) => return Err(io(e)),
        };
        let now = Utc::now();
        for job in registry.jobs.values_mut() {
            if !job.state.is_finished() {
                job.state = JobState::Failed;
                job.error = Some("interrupted by service restart".into());
                job.finished_at = Some(now);
            }
            if let Some(key) = &job.idempotency_key {
                registry.keys.insert((job.project_id.clone(), key.clone()), job.job_id.clone());
            }
        }
        let manager = Self { registry: Mutex::new(registry), path: Some(path.to_path_buf()), permits: Arc::new(Semaphore::new(workers.max(1))) };
        manager.persist(&manager.registry.lock().unwrap())?;
        Ok(manager)
    }

    fn persist(&self, registry: &Registry) -> Result<(), JobError> {
        let Some(path) = &self.path else { return Ok(()) };
        let io = |source| JobError::Io { path: path.clone(), source };
        let bytes = serde_json::to_vec_pretty(registry).expect("registry serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, bytes).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    /// Registers a job. A key already bound to a job in this project returns
    /// that job, unless it failed, in which case it is re-queued under the
    /// same id.
    pub fn submit(&self, project_id: &str, filter: LabelFilter, idempotency_key: Option<String>) -> Result<Submission, JobError> {
        let mut reg = self.registry.lock().unwrap();
        let now = Utc::now();
        if let Some(key) = &idempotency_key {
            if let Some(id) = reg.keys.get(&(project_id.to_string(), key.clone())).cloned() {
                let job = reg.jobs.get_mut(&id).expect("keyed job exists");
                if job.state != JobState::Failed {
                    return Ok(Submission::Existing(id));
                }
                job.state = JobState::Queued;
                job.filter = filter;
                job.outcomes.clear();
                job.error = None;
                job.submitted_at = now;
                job.finished_at = None;
                self.persist(&reg)?;
                return Ok(Submission::Queued(id));
            }
        }
        let job_id = format!("job-{}", uuid::Uuid::new_v4().simple());
        let job = LabelJob {
            job_id: job_id.clone(),
            project_id: project_id.to_string(),
            filter,
            state: JobState::Queued,
            outcomes: Vec::new(),
            idempotency_key: idempotency_key.clone(),
            error: None,
            submitted_at: now,
            finished_at: None,
        };
        reg.jobs.insert(job_id.clone(), job);
        if let Some(key) = idempotency_key {
            reg.keys.insert((project_id.to_string(), key), job_id.clone());
        }
        self.persist(&reg)?;
        Ok(Submission::Queued(job_id))
    }

    pub fn get(&self, job_id: &str) -> Option<LabelJob> {
        self.registry.lock().unwrap().jobs.get(job_id).cloned()
    }

    pub fn jobs(&self) -> Vec<LabelJob> {
        self.registry.lock().unwrap().jobs.values().cloned().collect()
    }

    pub fn mark_running(&self, job_id: &str) -> Result<(), JobError> {
        self.transition(job_id, JobState::Running, |_| {})
    }

    pub fn finish(&self, job_id: &str, result: Result<Vec<JobOutcome>, String>) -> Result<(), JobError> {
        match result {
            Ok(outcomes) => self.transition(job_id, JobState::Done, |job| job.outcomes = outcomes),
            Err(error) => self.transition(job_id, JobState::Failed, |job| job.error = Some(error)),
        }
    }

    fn transition(&self, job_id: &str, to: JobState, update: impl FnOnce(&mut LabelJob)) -> Result<(), JobError> {
        let mut reg = self.registry.lock().unwrap();
        let job = reg.jobs.get_mut(job_id).ok_or_else(|| JobError::UnknownJob(job_id.to_string()))?;
        let legal = matches!(
            (job.state, to),
            (JobState::Queued, JobState::Running) | (JobState::Running, JobState::Done | JobState::Failed) | (JobState::Queued, JobState::Failed)
        );
        if !legal {
            return Err(JobError::IllegalTransition { from: job.state, to });
        }
        job.state = to;
        if to.is_finished() {
            job.finished_at = Some(Utc::now());
        }
        update(job);
        self.persist(&reg)
    }

    /// Waits for a worker slot.
    pub async fn acquire(&self) -> OwnedSemaphorePermit {
        Arc::clone(&self.permits).acquire_owned().await.expect("job semaphore is never closed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idempotency_key_returns_same_job() {
        let jobs = JobManager::in_memory(2);
        let a = jobs.submit("p", LabelFilter::default(), Some("k".into())).unwrap();
        let b = jobs.submit("p", LabelFilter::default(), Some("k".into())).unwrap();
        assert!(matches!(a, Submission::Queued(_)));
        assert_eq!(b, Submission::Existing(a.job_id().to_string()));
        let other_project = jobs.submit("q", LabelFilter::default(), Some("k".into())).unwrap();
        assert_ne!(other_project.job_id(), a.job_id());
        let unkeyed = jobs.submit("p", LabelFilter::default(), None).unwrap();
        assert_ne!(unkeyed.job_id(), a.job_id());
    }

    #[test]
    fn transitions_are_forward_only() {
        let jobs = JobManager::in_memory(1);
        let id = jobs.submit("p", LabelFilter::default(), None).unwrap().job_id().to_string();
        assert!(jobs.finish(&id, Ok(vec![])).is_err());
        jobs.mark_running(&id).unwrap();
        assert!(jobs.mark_running(&id).is_err());
        jobs.finish(&id, Ok(vec![])).unwrap();
        assert_eq!(jobs.get(&id).unwrap().state, JobState::Done);
        assert!(jobs.finish(&id, Err("late".into())).is_err());
    }

    #[test]
    fn restart_fails_unfinished_jobs_and_key_requeues() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("jobs.json");
        let (running, done) = {
            let jobs = JobManager::open(&path, 1).unwrap();
            let running = jobs.submit("p", LabelFilter::default(), Some("k1".into())).unwrap().job_id().to_string();
            jobs.mark_running(&running).unwrap();
            let done = jobs.submit("p", LabelFilter::default(), Some("k2".into())).unwrap().job_id().to_string();
            jobs.mark_running(&done).unwrap();
            jobs.finish(&done, Ok(vec![])).unwrap();
            (running, done)
        };
        let jobs = JobManager::open(&path, 1).unwrap();
        let job = jobs.get(&running).unwrap();
        assert_eq!(job.state, JobState::Failed);
        assert!(job.error.unwrap().contains("restart"));
        assert_eq!(jobs.get(&done).unwrap().state, JobState::Done);
        assert_eq!(jobs.submit("p", LabelFilter::default(), Some("k1".into())).unwrap(), Submission::Queued(running.clone()));
        assert_eq!(jobs.get(&running).unwrap().state, JobState::Queued);
        assert_eq!(jobs.submit("p", LabelFilter::default(), Some("k2".into())).unwrap(), Submission::Existing(done));
    }
}
