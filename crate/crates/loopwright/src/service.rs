//! HTTP task service for first annotators and judges.
//!
//! Leases are exclusive and expire after a TTL. Judge payloads carry the
//! claim and the presented labels only.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use loopwright_core::metrics::VariabilityTable;
use loopwright_core::prompt::{cw_allowed_outputs, parse_cw_output};
use loopwright_core::{
    validate_message, AnnotationEvent, AnnotatorRef, CwLabel, EffortReport, MessageRecord, PromptMode, Timestamp,
};

use crate::bundle::{ExportError, Manifest};
use crate::clock::{system_clock, Clock};
use crate::dataset::Dataset;
use crate::orchestrate::OrchestrateError;
use crate::project::{Project, ProjectError, SharedProject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    FirstAnnotator,
    Judge,
    Operator,
}

impl Role {
    fn short(self) -> &'static str {
        match self {
            Role::FirstAnnotator => "fa",
            Role::Judge => "judge",
            Role::Operator => "op",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrant {
    pub token: String,
    pub annotator: String,
    pub roles: Vec<Role>,
}

impl TokenGrant {
    fn identity(&self, role: Role) -> AnnotatorRef {
        match role {
            Role::Judge => AnnotatorRef::judge(self.annotator.clone()),
            _ => AnnotatorRef::human(self.annotator.clone()),
        }
    }
}

fn default_ttl() -> u64 {
    30 * 60
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(rename = "token", default)]
    pub tokens: Vec<TokenGrant>,
    #[serde(default = "default_ttl")]
    pub lease_ttl_secs: u64,
    /// Adds the parent message text to judge payloads.
    #[serde(default)]
    pub judge_message_context: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { tokens: Vec::new(), lease_ttl_secs: default_ttl(), judge_message_context: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub claim_text: String,
    /// Judge role only, in presentation order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_labels: Option<Vec<CwLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message_text: Option<String>,
    pub label_space: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLease {
    pub task_id: String,
    pub project: String,
    pub claim_id: String,
    pub role: Role,
    pub assignee: AnnotatorRef,
    pub expires_at: Timestamp,
    pub payload: TaskPayload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextResponse {
    pub lease: Option<TaskLease>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub task_id: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueDepths {
    /// Claims without a first-annotator label.
    pub first_annotator: usize,
    /// Claims with a human label still waiting for model output.
    pub awaiting_model: usize,
    pub judge: usize,
    pub leased_first_annotator: usize,
    pub leased_judge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub project: String,
    pub total_claims: usize,
    /// Not routed yet.
    pub pending: usize,
    pub accepted: usize,
    /// Routed to the judge, decided or not.
    pub judged: usize,
    pub judged_percent: f64,
    pub finalized: usize,
    pub completion_percent: f64,
    pub queues: QueueDepths,
    pub effort: EffortReport,
    pub variability: VariabilityTable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateProject {
    pub project_id: String,
    #[serde(default)]
    pub seed: u64,
    pub messages: Vec<MessageRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }
    fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")
    }
    fn forbidden(role: Role) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", format!("token is not granted the {role:?} role"))
    }
    fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", what)
    }
    fn not_lease_holder(task: &str) -> Self {
        Self::new(StatusCode::FORBIDDEN, "not_lease_holder", format!("caller does not hold the lease on {task}"))
    }
    fn internal(e: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { code: self.code.into(), message: self.message })).into_response()
    }
}

impl From<ProjectError> for ApiError {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::Orchestrate(
                OrchestrateError::AlreadyAnnotated(_) | OrchestrateError::AlreadyFinal(_) | OrchestrateError::NoOpenCase(_),
            ) => ApiError::new(StatusCode::CONFLICT, "task_closed", e.to_string()),
            ProjectError::Orchestrate(OrchestrateError::UnknownClaim(_)) => ApiError::not_found(e.to_string()),
            ProjectError::Exists(_) => ApiError::new(StatusCode::CONFLICT, "exists", e.to_string()),
            ProjectError::Import(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_dataset", e.to_string()),
            other => ApiError::internal(other),
        }
    }
}

#[derive(Debug, Clone)]
struct Lease {
    project: String,
    claim_id: String,
    role: Role,
    assignee: AnnotatorRef,
    expires_at: Timestamp,
}

pub struct Service {
    config: ServiceConfig,
    clock: Clock,
    root: Option<PathBuf>,
    projects: Mutex<BTreeMap<String, SharedProject>>,
    leases: Mutex<HashMap<String, Lease>>,
}

fn valid_project_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub fn task_id(project: &str, role: Role, claim_id: &str) -> String {
    format!("{project}:{}:{claim_id}", role.short())
}

impl Service {
    pub fn new(config: ServiceConfig) -> Self {
        Self {
            config,
            clock: system_clock(),
            root: None,
            projects: Mutex::new(BTreeMap::new()),
            leases: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    /// Directory under which `POST /projects` creates projects.
    pub fn with_root(mut self, root: PathBuf) -> Self {
        self.root = Some(root);
        self
    }

    pub fn add_project(&self, id: &str, project: SharedProject) {
        self.projects.lock().expect("project table").insert(id.into(), project);
    }

    pub fn project(&self, id: &str) -> Result<SharedProject, ApiError> {
        self.projects
            .lock()
            .expect("project table")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("project {id}")))
    }

    fn authenticate(&self, headers: &HeaderMap, role: Role) -> Result<AnnotatorRef, ApiError> {
        let token = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        let grant = self.config.tokens.iter().find(|g| g.token == token).ok_or_else(ApiError::unauthorized)?;
        if !grant.roles.contains(&role) {
            return Err(ApiError::forbidden(role));
        }
        Ok(grant.identity(role))
    }

    fn any_token(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        let token = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        if self.config.tokens.iter().any(|g| g.token == token) {
            Ok(())
        } else {
            Err(ApiError::unauthorized())
        }
    }

    fn now(&self) -> Timestamp {
        (self.clock)()
    }

    fn payload(&self, project: &Project, role: Role, claim_id: &str) -> TaskPayload {
        let claim_text = project.dataset().claim(claim_id).map(|c| c.text.clone()).unwrap_or_default();
        let label_space = cw_allowed_outputs();
        match role {
            Role::Judge => {
                let case = project.state().cases.get(claim_id);
                let message_text = self
                    .config
                    .judge_message_context
                    .then(|| project.dataset().message_of(claim_id))
                    .flatten()
                    .map(|m| m.raw_text.clone().unwrap_or_else(|| m.reconstructed_text()));
                TaskPayload {
                    claim_text,
                    presented_labels: case.map(|c| c.presented_labels.clone()),
                    message_text,
                    label_space,
                }
            }
            _ => TaskPayload { claim_text, presented_labels: None, message_text: None, label_space },
        }
    }

    /// Oldest task of `role` without a live lease, or the caller's own
    /// live lease if it already holds one.
    pub fn lease_next(&self, project_id: &str, role: Role, annotator: &AnnotatorRef) -> Result<Option<TaskLease>, ApiError> {
        if role == Role::Operator {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "operators do not take tasks"));
        }
        let shared = self.project(project_id)?;
        let now = self.now();
        let mut leases = self.leases.lock().expect("lease table");
        let project = shared.lock().expect("project lock poisoned");
        let state = project.state();

        let candidates: Vec<String> = match role {
            Role::FirstAnnotator => project
                .dataset()
                .claims()
                .filter(|c| !state.human.contains_key(&c.claim_id))
                .map(|c| c.claim_id.clone())
                .collect(),
            _ => state.open_cases().map(|c| c.claim_id.clone()).collect(),
        };
        let live = |l: &Lease| l.expires_at > now;
        let own = candidates.iter().find(|id| {
            leases
                .get(&task_id(project_id, role, id))
                .is_some_and(|l| live(l) && &l.assignee == annotator)
        });
        let free = || {
            candidates
                .iter()
                .find(|id| !leases.get(&task_id(project_id, role, id)).is_some_and(live))
        };
        let Some(claim_id) = own.or_else(free).cloned() else {
            return Ok(None);
        };
        let id = task_id(project_id, role, &claim_id);
        let expires_at = Timestamp(now.0 + self.config.lease_ttl_secs * 1000);
        leases.insert(
            id.clone(),
            Lease {
                project: project_id.into(),
                claim_id: claim_id.clone(),
                role,
                assignee: annotator.clone(),
                expires_at,
            },
        );
        Ok(Some(TaskLease {
            task_id: id,
            project: project_id.into(),
            payload: self.payload(&project, role, &claim_id),
            claim_id,
            role,
            assignee: annotator.clone(),
            expires_at,
        }))
    }

    fn held_lease(&self, leases: &HashMap<String, Lease>, task: &str, caller: &AnnotatorRef) -> Result<Lease, ApiError> {
        let lease = leases.get(task).filter(|l| &l.assignee == caller).ok_or_else(|| ApiError::not_lease_holder(task))?;
        Ok(lease.clone())
    }

    /// `caller` must be the identity the lease was issued to; the role is
    /// taken from the lease.
    pub fn submit(&self, task: &str, caller_token_role: impl Fn(Role) -> Result<AnnotatorRef, ApiError>, label: &str) -> Result<SubmitResponse, ApiError> {
        let mut leases = self.leases.lock().expect("lease table");
        let role = leases.get(task).map(|l| l.role).ok_or_else(|| ApiError::not_lease_holder(task))?;
        let caller = caller_token_role(role)?;
        let lease = self.held_lease(&leases, task, &caller)?;
        let now = self.now();
        if lease.expires_at <= now {
            leases.remove(task);
            return Err(ApiError::new(StatusCode::GONE, "lease_expired", format!("lease on {task} expired")));
        }
        let label: CwLabel = parse_cw_output(label).map_err(|_| {
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "wrong_label_space",
                format!("{label:?} is not one of {:?}", cw_allowed_outputs()),
            )
        })?;
        let shared = self.project(&lease.project)?;
        let mut project = shared.lock().expect("project lock poisoned");
        let annotation = AnnotationEvent {
            claim_id: lease.claim_id.clone(),
            source: caller,
            label,
            run_index: 0,
            prompt_mode: PromptMode::NotApplicable,
            created_at: now,
        };
        let result = match lease.role {
            Role::Judge => project.record_judge(annotation),
            _ => project.record_human(annotation),
        };
        leases.remove(task);
        result?;
        Ok(SubmitResponse { task_id: task.into(), status: "recorded".into() })
    }

    pub fn release(&self, task: &str, caller_token_role: impl Fn(Role) -> Result<AnnotatorRef, ApiError>) -> Result<(), ApiError> {
        let mut leases = self.leases.lock().expect("lease table");
        let role = leases.get(task).map(|l| l.role).ok_or_else(|| ApiError::not_lease_holder(task))?;
        let caller = caller_token_role(role)?;
        self.held_lease(&leases, task, &caller)?;
        leases.remove(task);
        Ok(())
    }

    pub fn stats(&self, project_id: &str) -> Result<Stats, ApiError> {
        let shared = self.project(project_id)?;
        let now = self.now();
        let leased = |role: Role| {
            self.leases
                .lock()
                .expect("lease table")
                .values()
                .filter(|l| l.project == project_id && l.role == role && l.expires_at > now)
                .count()
        };
        let (leased_fa, leased_judge) = (leased(Role::FirstAnnotator), leased(Role::Judge));
        let project = shared.lock().expect("project lock poisoned");
        let state = project.state();
        let total = project.dataset().claim_count();
        let judged = state.decisions.values().filter(|d| d.needs_judge()).count();
        let accepted = state.decisions.len() - judged;
        let pct = |n: usize| if total == 0 { 0.0 } else { n as f64 * 100.0 / total as f64 };
        Ok(Stats {
            project: project_id.into(),
            total_claims: total,
            pending: total - state.decisions.len(),
            accepted,
            judged,
            judged_percent: pct(judged),
            finalized: state.finals.len(),
            completion_percent: pct(state.finals.len()),
            queues: QueueDepths {
                first_annotator: total - state.human.len(),
                awaiting_model: state.human.keys().filter(|id| !state.triples.contains_key(*id)).count(),
                judge: state.open_cases().count(),
                leased_first_annotator: leased_fa,
                leased_judge: leased_judge,
            },
            effort: project.effort(),
            variability: project.variability(),
        })
    }

    pub fn export(&self, project_id: &str) -> Result<Manifest, ApiError> {
        let shared = self.project(project_id)?;
        let project = shared.lock().expect("project lock poisoned");
        project.export().map_err(|e| match e {
            ExportError::IncompleteTrack(_) => ApiError::new(StatusCode::CONFLICT, "incomplete_track", e.to_string()),
            other => ApiError::internal(other),
        })
    }

    pub fn create_project(&self, request: CreateProject) -> Result<(), ApiError> {
        if !valid_project_id(&request.project_id) {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "project ids use [A-Za-z0-9_-]"));
        }
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "service has no project root"))?;
        if self.projects.lock().expect("project table").contains_key(&request.project_id) {
            return Err(ApiError::new(StatusCode::CONFLICT, "exists", format!("project {}", request.project_id)));
        }
        for m in &request.messages {
            let report = validate_message(m);
            if !report.is_valid() {
                let issues: Vec<String> = report.errors.iter().map(ToString::to_string).collect();
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_dataset",
                    format!("message {}: {}", m.message_id, issues.join("; ")),
                ));
            }
        }
        let dataset = Dataset::new(request.messages).map_err(ProjectError::from)?;
        let project = Project::create(&root.join(&request.project_id), dataset, request.seed)?
            .with_clock(self.clock.clone());
        self.add_project(&request.project_id, project.into_shared());
        Ok(())
    }

    fn grant_for(&self, headers: &HeaderMap) -> impl Fn(Role) -> Result<AnnotatorRef, ApiError> + '_ {
        let headers = headers.clone();
        move |role| self.authenticate(&headers, role)
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    role: Role,
    project: Option<String>,
}

type Shared = Arc<Service>;

fn resolve_project(service: &Service, requested: Option<String>) -> Result<String, ApiError> {
    if let Some(p) = requested {
        return Ok(p);
    }
    let projects = service.projects.lock().expect("project table");
    match projects.keys().collect::<Vec<_>>().as_slice() {
        [only] => Ok((*only).clone()),
        _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "specify ?project=")),
    }
}

async fn next_task(State(s): State<Shared>, headers: HeaderMap, Query(q): Query<NextQuery>) -> Result<Json<NextResponse>, ApiError> {
    let annotator = s.authenticate(&headers, q.role)?;
    let project = resolve_project(&s, q.project)?;
    Ok(Json(NextResponse { lease: s.lease_next(&project, q.role, &annotator)? }))
}

async fn submit_task(
    State(s): State<Shared>,
    headers: HeaderMap,
    Path(task): Path<String>,
    Json(body): Json<SubmitRequest>,
) -> Result<Json<SubmitResponse>, ApiError> {
    s.authenticate_any(&headers)?;
    Ok(Json(s.submit(&task, s.grant_for(&headers), &body.label)?))
}

async fn release_task(State(s): State<Shared>, headers: HeaderMap, Path(task): Path<String>) -> Result<StatusCode, ApiError> {
    s.authenticate_any(&headers)?;
    s.release(&task, s.grant_for(&headers))?;
    Ok(StatusCode::NO_CONTENT)
}

async fn project_stats(State(s): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<Json<Stats>, ApiError> {
    s.any_token(&headers)?;
    Ok(Json(s.stats(&id)?))
}

async fn project_export(State(s): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Result<Json<Manifest>, ApiError> {
    s.authenticate(&headers, Role::Operator)?;
    Ok(Json(s.export(&id)?))
}

async fn create_project(
    State(s): State<Shared>,
    headers: HeaderMap,
    Json(body): Json<CreateProject>,
) -> Result<StatusCode, ApiError> {
    s.authenticate(&headers, Role::Operator)?;
    s.create_project(body)?;
    Ok(StatusCode::CREATED)
}

impl Service {
    fn authenticate_any(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        self.any_token(headers)
    }
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}/stats", get(project_stats))
        .route("/projects/{id}/export", get(project_export))
        .route("/tasks/next", get(next_task))
        .route("/tasks/{id}/submit", post(submit_task))
        .route("/tasks/{id}/release", post(release_task))
        .with_state(service)
}

pub async fn serve(listener: tokio::net::TcpListener, service: Arc<Service>) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}
