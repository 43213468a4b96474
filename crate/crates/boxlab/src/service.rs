//! `/v1` HTTP service.
//!
//! Each project lives in its own directory under the service root and is
//! held open (and locked) for the lifetime of the process. Writes to a
//! project are serialized through its mutex and saved before the response
//! is sent; label jobs call the provider outside the lock and commit through
//! it afterwards.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use boxlab_core::annotation::AnnotationError;
use boxlab_core::evaluation::{agreement_stats, AgreementStats};
use boxlab_core::labeling::label_batch;
use boxlab_core::project::{export_coco, CategoryLevel, ExportOptions, ProjectError, TruthTable};
use boxlab_core::{Annotation, AnnotationStatus, BoundingBox, Clock, ImageRecord, MatchPolicy, Provider, SystemClock, TaskConfig};

use crate::cli::parse_statuses;
use crate::eval::evaluate_project;
use crate::filter::{FilterError, LabelFilter};
use crate::jobs::{commit_outcomes, JobError, JobManager, LabelJob, Submission};
use crate::verdict::Verdict;
use crate::workspace::{is_project, new_project_id, Workspace, WorkspaceError};

/// Header carrying the annotator identity on mutating requests.
pub const ANNOTATOR_HEADER: &str = "x-annotator-id";
pub const JOBS_FILE: &str = "jobs.json";

type Slot = Arc<Mutex<Workspace>>;

struct Inner {
    root: PathBuf,
    projects: RwLock<BTreeMap<String, Slot>>,
    jobs: JobManager,
    provider: Arc<dyn Provider>,
    clock: Arc<dyn Clock>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens every project directory under `root` and the persisted job
    /// registry.
    pub fn open(root: &Path, provider: Arc<dyn Provider>, workers: usize) -> Result<Self, ApiError> {
        Self::open_with_clock(root, provider, workers, Arc::new(SystemClock))
    }

    pub fn open_with_clock(root: &Path, provider: Arc<dyn Provider>, workers: usize, clock: Arc<dyn Clock>) -> Result<Self, ApiError> {
        std::fs::create_dir_all(root).map_err(ApiError::internal)?;
        let mut projects = BTreeMap::new();
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
            .map_err(ApiError::internal)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| is_project(p))
            .collect();
        dirs.sort();
        for dir in dirs {
            let ws = Workspace::open(&dir)?;
            projects.insert(ws.project.id.clone(), Arc::new(Mutex::new(ws)));
        }
        let jobs = JobManager::open(&root.join(JOBS_FILE), workers)?;
        Ok(Self(Arc::new(Inner { root: root.to_path_buf(), projects: RwLock::new(projects), jobs, provider, clock })))
    }

    pub fn jobs(&self) -> &JobManager {
        &self.0.jobs
    }

    fn slot(&self, project_id: &str) -> Result<Slot, ApiError> {
        self.0
            .projects
            .read()
            .unwrap()
            .get(project_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_project", format!("unknown project `{project_id}`")))
    }

    fn slots(&self) -> Vec<Slot> {
        self.0.projects.read().unwrap().values().cloned().collect()
    }

    /// Runs `f` on a project under its writer lock, off the async executor.
    async fn with_project<T: Send + 'static>(
        &self,
        project_id: &str,
        f: impl FnOnce(&mut Workspace) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let slot = self.slot(project_id)?;
        tokio::task::spawn_blocking(move || f(&mut slot.lock().unwrap())).await.map_err(ApiError::internal)?
    }

    /// Finds the project owning an annotation or image id.
    fn owner(&self, find: impl Fn(&Workspace) -> bool) -> Option<Slot> {
        self.slots().into_iter().find(|slot| find(&slot.lock().unwrap()))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }

    pub fn status(&self) -> StatusCode {
        self.status
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.status, self.code, self.message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        let message = e.to_string();
        match e {
            ProjectError::UnknownImage(_) => Self::not_found("unknown_image", message),
            ProjectError::UnknownAnnotation(_) => Self::not_found("unknown_annotation", message),
            ProjectError::Annotation(AnnotationError::IllegalTransition { .. }) => {
                Self::new(StatusCode::CONFLICT, "illegal_transition", message)
            }
            ProjectError::Conflict(_) => Self::new(StatusCode::CONFLICT, "conflict", message),
            ProjectError::Annotation(AnnotationError::Box(_)) | ProjectError::InvalidBox { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_box", message)
            }
            ProjectError::Annotation(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_event", message),
            ProjectError::UnlabeledInExport(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "unlabeled_in_export", message),
            ProjectError::Taxonomy(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_label", message),
            ProjectError::DanglingReference(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "dangling_reference", message),
            ProjectError::Locked(_) => Self::new(StatusCode::LOCKED, "locked", message),
            ProjectError::Io { .. } | ProjectError::CorruptProject { .. } => Self::internal(message),
        }
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        match e {
            WorkspaceError::Project(p) => p.into(),
            WorkspaceError::Image(i) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_image", i.to_string()),
            other => Self::internal(other),
        }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_filter", e.to_string())
    }
}

impl From<JobError> for ApiError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::UnknownJob(_) => Self::not_found("unknown_job", e.to_string()),
            other => Self::internal(other),
        }
    }
}

fn annotator(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(ANNOTATOR_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| ApiError::bad_request("missing_annotator", format!("the {ANNOTATOR_HEADER} header is required")))
}

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/v1/projects", get(list_projects).post(create_project))
        .route("/v1/projects/{p}", get(get_project))
        .route("/v1/projects/{p}/images", get(list_images).post(upload_images))
        .route("/v1/images/{id}/content", get(image_content))
        .route("/v1/projects/{p}/annotations", get(list_annotations).post(create_annotation))
        .route("/v1/annotations/{a}", get(get_annotation))
        .route("/v1/annotations/{a}/verdict", post(record_verdict))
        .route("/v1/projects/{p}/truth", post(upload_truth))
        .route("/v1/projects/{p}/label-jobs", post(submit_label_job))
        .route("/v1/label-jobs/{j}", get(get_label_job))
        .route("/v1/projects/{p}/stats", get(project_stats))
        .route("/v1/projects/{p}/export", get(export_project))
        .layer(DefaultBodyLimit::max(64 * 1024 * 1024))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ProjectSummary {
    pub id: String,
    pub name: String,
    pub images: usize,
    pub annotations: usize,
    pub status_counts: BTreeMap<AnnotationStatus, usize>,
    pub config: TaskConfig,
}

fn summary(ws: &Workspace) -> ProjectSummary {
    let mut status_counts: BTreeMap<AnnotationStatus, usize> = AnnotationStatus::ALL.into_iter().map(|s| (s, 0)).collect();
    for a in ws.project.annotations() {
        *status_counts.entry(a.status).or_default() += 1;
    }
    ProjectSummary {
        id: ws.project.id.clone(),
        name: ws.project.name.clone(),
        images: ws.project.images().count(),
        annotations: ws.project.annotations().count(),
        status_counts,
        config: ws.project.config.clone(),
    }
}

async fn list_projects(State(state): State<AppState>) -> Json<Vec<ProjectSummary>> {
    Json(state.slots().iter().map(|s| summary(&s.lock().unwrap())).collect())
}

async fn get_project(State(state): State<AppState>, UrlPath(p): UrlPath<String>) -> Result<Json<ProjectSummary>, ApiError> {
    state.with_project(&p, |ws| Ok(Json(summary(ws)))).await
}

#[derive(Debug, Deserialize)]
pub struct CreateProject {
    pub name: String,
    /// Builtin taxonomy name.
    #[serde(default)]
    pub taxonomy: Option<String>,
    /// Taxonomy as TOML text; takes precedence over `taxonomy`.
    #[serde(default)]
    pub taxonomy_toml: Option<String>,
    #[serde(default)]
    pub config: Option<TaskConfig>,
}

async fn create_project(State(state): State<AppState>, Json(req): Json<CreateProject>) -> Result<(StatusCode, Json<ProjectSummary>), ApiError> {
    let invalid = |m: String| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_project", m);
    if req.name.trim().is_empty() {
        return Err(invalid("project name is empty".into()));
    }
    let taxonomy = match (&req.taxonomy_toml, &req.taxonomy) {
        (Some(text), _) => boxlab_core::Taxonomy::from_toml(text).map_err(|e| invalid(e.to_string()))?,
        (None, Some(name)) => boxlab_core::Taxonomy::builtin(name).ok_or_else(|| invalid(format!("unknown taxonomy `{name}`")))?,
        (None, None) => boxlab_core::Taxonomy::empty(),
    };
    if let Some(config) = &req.config {
        config.validate().map_err(|e| invalid(e.to_string()))?;
    }
    let inner = Arc::clone(&state.0);
    let ws = tokio::task::spawn_blocking(move || -> Result<Workspace, ApiError> {
        let id = new_project_id();
        let mut ws = Workspace::create_with_id(&inner.root.join(&id), &id, req.name.trim(), taxonomy)?;
        if let Some(config) = req.config {
            ws.project.config = config;
            ws.save()?;
        }
        Ok(ws)
    })
    .await
    .map_err(ApiError::internal)??;
    let out = summary(&ws);
    state.0.projects.write().unwrap().insert(ws.project.id.clone(), Arc::new(Mutex::new(ws)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn list_images(State(state): State<AppState>, UrlPath(p): UrlPath<String>) -> Result<Json<Vec<ImageRecord>>, ApiError> {
    state.with_project(&p, |ws| Ok(Json(ws.project.images().cloned().collect()))).await
}

#[derive(Debug, Serialize)]
struct UploadedImage {
    #[serde(flatten)]
    record: ImageRecord,
    created: bool,
}

async fn upload_images(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    mut multipart: Multipart,
) -> Result<(StatusCode, Json<Vec<UploadedImage>>), ApiError> {
    state.slot(&p)?;
    let mut files = Vec::new();
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request("invalid_multipart", e.to_string()))? {
        let name = field.file_name().or(field.name()).unwrap_or("upload").to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::bad_request("invalid_multipart", e.to_string()))?;
        files.push((name, bytes));
    }
    if files.is_empty() {
        return Err(ApiError::bad_request("no_files", "the upload contained no files"));
    }
    let uploaded = state
        .with_project(&p, move |ws| {
            let mut out = Vec::with_capacity(files.len());
            for (name, bytes) in &files {
                let (record, created) = ws.ingest(bytes, name)?;
                out.push(UploadedImage { record, created });
            }
            ws.save()?;
            Ok(out)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(uploaded)))
}

async fn image_content(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let slot = state
        .owner(|ws| ws.project.image(&id).is_some())
        .ok_or_else(|| ApiError::not_found("unknown_image", format!("unknown image `{id}`")))?;
    let (record, images) = {
        let ws = slot.lock().unwrap();
        (ws.project.image(&id).cloned().expect("owner has the image"), Arc::clone(ws.images()))
    };
    let bytes = tokio::task::spawn_blocking(move || images.bytes(&record.id).map(|b| (record, b)))
        .await
        .map_err(ApiError::internal)?
        .map_err(ApiError::internal)?;
    let (record, bytes) = bytes;
    let mime = match record.format.as_str() {
        "png" => "image/png",
        "jpg" => "image/jpeg",
        "gif" => "image/gif",
        "bmp" => "image/bmp",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime), (header::CACHE_CONTROL, "public, max-age=31536000, immutable")], bytes.as_ref().clone())
        .into_response())
}

/// Box in image pixels; fractional values (from a zoomed canvas) are rounded
/// half away from zero.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct BoxInput {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Deserialize)]
pub struct CreateAnnotation {
    pub image_id: String,
    /// Omitted or null for a whole-image annotation.
    #[serde(default, rename = "box")]
    pub bbox: Option<BoxInput>,
}

async fn create_annotation(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    headers: HeaderMap,
    Json(req): Json<CreateAnnotation>,
) -> Result<(StatusCode, Json<Annotation>), ApiError> {
    let who = annotator(&headers)?;
    let bbox = req
        .bbox
        .map(|b| BoundingBox::from_fractional(b.x, b.y, b.width, b.height))
        .transpose()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_box", e.to_string()))?;
    let clock = Arc::clone(&state.0.clock);
    let created = state
        .with_project(&p, move |ws| {
            let a = ws.project.create_annotation(&req.image_id, bbox, &who, clock.now())?;
            ws.save()?;
            Ok(a)
        })
        .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

#[derive(Debug, Deserialize)]
pub struct AnnotationQuery {
    #[serde(default)]
    pub status: Option<String>,
}

async fn list_annotations(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    Query(q): Query<AnnotationQuery>,
) -> Result<Json<Vec<Annotation>>, ApiError> {
    let statuses = match q.status.as_deref() {
        Some(list) => Some(parse_statuses(list).map_err(|e| ApiError::bad_request("invalid_status", e))?),
        None => None,
    };
    state
        .with_project(&p, move |ws| {
            Ok(Json(
                ws.project
                    .annotations()
                    .filter(|a| statuses.as_ref().is_none_or(|s| s.contains(&a.status)))
                    .cloned()
                    .collect(),
            ))
        })
        .await
}

fn annotation_owner(state: &AppState, id: &str) -> Result<String, ApiError> {
    state
        .owner(|ws| ws.project.annotation(id).is_some())
        .map(|slot| slot.lock().unwrap().project.id.clone())
        .ok_or_else(|| ApiError::not_found("unknown_annotation", format!("unknown annotation `{id}`")))
}

async fn get_annotation(State(state): State<AppState>, UrlPath(a): UrlPath<String>) -> Result<Json<Annotation>, ApiError> {
    let p = annotation_owner(&state, &a)?;
    state
        .with_project(&p, move |ws| {
            ws.project.annotation(&a).cloned().map(Json).ok_or_else(|| ProjectError::UnknownAnnotation(a).into())
        })
        .await
}

async fn record_verdict(
    State(state): State<AppState>,
    UrlPath(a): UrlPath<String>,
    headers: HeaderMap,
    Json(verdict): Json<Verdict>,
) -> Result<Json<Annotation>, ApiError> {
    let who = annotator(&headers)?;
    let p = annotation_owner(&state, &a)?;
    let clock = Arc::clone(&state.0.clock);
    state
        .with_project(&p, move |ws| {
            let updated = ws.project.apply(&a, verdict.to_event(&who, clock.now()))?;
            ws.save()?;
            Ok(Json(updated))
        })
        .await
}

#[derive(Debug, Serialize)]
struct TruthUpload {
    assigned: usize,
    unmatched: Vec<String>,
}

/// Loads ground truth as a `key<TAB>class` table in the request body.
async fn upload_truth(State(state): State<AppState>, UrlPath(p): UrlPath<String>, body: String) -> Result<Json<TruthUpload>, ApiError> {
    let table = TruthTable::parse(&body).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_truth", e.to_string()))?;
    state
        .with_project(&p, move |ws| {
            let (resolved, unmatched) = table.resolve(&ws.project);
            for (id, class) in &resolved {
                ws.project.set_truth(id, class.as_str())?;
            }
            ws.save()?;
            Ok(Json(TruthUpload { assigned: resolved.len(), unmatched }))
        })
        .await
}

#[derive(Debug, Default, Deserialize)]
pub struct SubmitJob {
    #[serde(default)]
    pub filter: LabelFilter,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

async fn submit_label_job(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    Json(req): Json<SubmitJob>,
) -> Result<(StatusCode, Json<LabelJob>), ApiError> {
    let filter = req.filter.clone();
    state.with_project(&p, move |ws| Ok(filter.select(&ws.project)?)).await?;
    let submission = state.0.jobs.submit(&p, req.filter.clone(), req.idempotency_key)?;
    let job_id = submission.job_id().to_string();
    let status = match submission {
        Submission::Existing(_) => StatusCode::OK,
        Submission::Queued(_) => {
            tokio::spawn(run_job(state.clone(), p, job_id.clone(), req.filter));
            StatusCode::ACCEPTED
        }
    };
    let job = state.0.jobs.get(&job_id).ok_or_else(|| ApiError::internal("job vanished"))?;
    Ok((status, Json(job)))
}

async fn run_job(state: AppState, project_id: String, job_id: String, filter: LabelFilter) {
    let _permit = state.0.jobs.acquire().await;
    if state.0.jobs.mark_running(&job_id).is_err() {
        return;
    }
    let result = match state.slot(&project_id) {
        Ok(slot) => {
            let provider = Arc::clone(&state.0.provider);
            let clock = Arc::clone(&state.0.clock);
            tokio::task::spawn_blocking(move || -> Result<_, String> {
                let (selected, config, images) = {
                    let ws = slot.lock().unwrap();
                    let selected = filter.select(&ws.project).map_err(|e| e.to_string())?;
                    (selected, ws.project.config.clone(), Arc::clone(ws.images()))
                };
                let outcomes = label_batch(&config, &selected, &images, provider.as_ref(), clock.as_ref());
                let mut ws = slot.lock().unwrap();
                let committed = commit_outcomes(&mut ws.project, outcomes);
                ws.save().map_err(|e| e.to_string())?;
                Ok(committed)
            })
            .await
            .unwrap_or_else(|e| Err(format!("label job panicked: {e}")))
        }
        Err(e) => Err(e.message),
    };
    let _ = state.0.jobs.finish(&job_id, result);
}

async fn get_label_job(State(state): State<AppState>, UrlPath(j): UrlPath<String>) -> Result<Json<LabelJob>, ApiError> {
    state.0.jobs.get(&j).map(Json).ok_or_else(|| JobError::UnknownJob(j).into())
}

#[derive(Debug, Deserialize)]
pub struct StatsQuery {
    #[serde(default)]
    pub policy: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct AccuracySummary {
    pub policy: MatchPolicy,
    pub line: String,
    pub display: String,
    pub correct: u64,
    pub total: u64,
    pub excluded: u64,
}

#[derive(Debug, Serialize)]
pub struct CostInputs {
    /// Annotations that have received an AI label at some point.
    pub ai_labeled: usize,
    pub annotations: usize,
    pub requests: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Serialize)]
pub struct ProjectStats {
    pub project_id: String,
    pub status_counts: BTreeMap<AnnotationStatus, usize>,
    pub accuracy: Option<AccuracySummary>,
    pub agreement: AgreementStats,
    pub cost_inputs: CostInputs,
}

async fn project_stats(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    Query(q): Query<StatsQuery>,
) -> Result<Json<ProjectStats>, ApiError> {
    let policy: MatchPolicy = match q.policy.as_deref() {
        Some(s) => s.parse().map_err(|e| ApiError::bad_request("invalid_policy", e))?,
        None => MatchPolicy::default(),
    };
    state
        .with_project(&p, move |ws| {
            let project = &ws.project;
            let accuracy = if project.truth().is_empty() {
                None
            } else {
                evaluate_project(project, project.truth(), policy, &project.taxonomy).ok().map(|r| AccuracySummary {
                    policy,
                    line: r.accuracy_line(),
                    display: r.accuracy.display.clone(),
                    correct: r.accuracy.correct,
                    total: r.accuracy.total,
                    excluded: r.excluded,
                })
            };
            let usage = project.usage();
            Ok(Json(ProjectStats {
                project_id: project.id.clone(),
                status_counts: summary(ws).status_counts,
                accuracy,
                agreement: agreement_stats(project.annotations()),
                cost_inputs: CostInputs {
                    ai_labeled: project.annotations().filter(|a| a.ai_label.is_some()).count(),
                    annotations: project.annotations().count(),
                    requests: usage.requests,
                    input_tokens: usage.input_tokens,
                    output_tokens: usage.output_tokens,
                },
            }))
        })
        .await
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub level: Option<String>,
    #[serde(default)]
    pub include: Option<String>,
}

async fn export_project(
    State(state): State<AppState>,
    UrlPath(p): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let level: CategoryLevel = match q.level.as_deref() {
        Some(l) => l.parse().map_err(|e| ApiError::bad_request("invalid_level", e))?,
        None => CategoryLevel::default(),
    };
    let mut options = ExportOptions { level, ..Default::default() };
    if let Some(list) = q.include.as_deref() {
        options.include = parse_statuses(list).map_err(|e| ApiError::bad_request("invalid_status", e))?;
    }
    let doc = state.with_project(&p, move |ws| Ok(export_coco(&ws.project, &options)?)).await?;
    Ok(Json(doc).into_response())
}
