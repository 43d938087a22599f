//! Read-mostly HTTP API over one workspace, plus optional static assets for
//! a browser frontend.
//!
//! | method | path                      | body                          |
//! |--------|---------------------------|-------------------------------|
//! | GET    | `/api/versions`           | version summaries, ascending  |
//! | GET    | `/api/versions/{id}`      | entry and source text         |
//! | GET    | `/api/versions/{id}/dag`  | per-node view of the run      |
//! | GET    | `/api/metrics`            | series per metric name        |
//! | GET    | `/api/compare?a=&b=`      | comparison report             |
//! | POST   | `/api/run`                | `{"source", "options"}`       |

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use iterflow_core::dsl::DeclDiff;
use iterflow_core::engine::{self, Clock, EngineError, RunOptions};
use iterflow_core::workspace::{VersionEntry, Workspace, WorkspaceError};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 7878;

#[derive(Clone)]
pub struct AppState {
    ws: Workspace,
    defaults: RunOptions,
    /// At most one run in flight from this server; the workspace lock guards
    /// against other processes.
    running: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(ws: Workspace, defaults: RunOptions) -> Self {
        AppState {
            ws,
            defaults,
            running: Arc::new(Mutex::new(())),
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl ToString) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.to_string(),
                line: None,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<WorkspaceError> for ApiError {
    fn from(e: WorkspaceError) -> Self {
        let status = match e {
            WorkspaceError::NotFound(_) | WorkspaceError::NoMetric(_) => StatusCode::NOT_FOUND,
            WorkspaceError::LockHeld(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Parse(p) => ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                body: ErrorBody {
                    line: Some(p.line()),
                    error: p.to_string(),
                },
            },
            EngineError::Compile(_) | EngineError::Data { .. } => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e)
            }
            EngineError::LockHeld(_) => ApiError::new(StatusCode::CONFLICT, e),
            EngineError::Workspace(w) => w.into(),
            EngineError::MissingArtifact { .. } => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e)
            }
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionSummary {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub timestamp: u64,
    pub workflow: String,
    pub source_hash: String,
    pub change: DeclDiff,
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_us: u64,
}

impl From<&VersionEntry> for VersionSummary {
    fn from(v: &VersionEntry) -> Self {
        VersionSummary {
            id: v.id,
            parent_id: v.parent_id,
            timestamp: v.timestamp,
            workflow: v.workflow.clone(),
            source_hash: v.source_hash.clone(),
            change: v.change.clone(),
            metrics: v.record.metrics.clone(),
            wall_clock_us: v.record.wall_clock_us,
        }
    }
}

#[derive(Debug, Serialize)]
struct VersionDetail {
    entry: VersionEntry,
    source: String,
}

#[derive(Debug, Deserialize)]
struct CompareQuery {
    a: u64,
    b: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequestOptions {
    pub budget_bytes: Option<u64>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub no_reuse: bool,
    #[serde(default)]
    pub sim_clock: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    pub source: String,
    #[serde(default)]
    pub options: RunRequestOptions,
}

#[derive(Debug, Serialize)]
struct RunResponse {
    version: u64,
    record: engine::RunRecord,
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
}

async fn list_versions(State(s): State<AppState>) -> ApiResult<Vec<VersionSummary>> {
    let list = blocking(move || Ok(s.ws.list_versions()?)).await?;
    Ok(Json(list.iter().map(VersionSummary::from).collect()))
}

async fn get_version(
    State(s): State<AppState>,
    Path(id): Path<u64>,
) -> ApiResult<serde_json::Value> {
    let detail = blocking(move || {
        Ok(VersionDetail {
            entry: s.ws.get_version(id)?,
            source: s.ws.checkout(id)?,
        })
    })
    .await?;
    Ok(Json(serde_json::to_value(detail).expect("serializable")))
}

async fn get_dag(State(s): State<AppState>, Path(id): Path<u64>) -> ApiResult<serde_json::Value> {
    let view = blocking(move || Ok(s.ws.dag_view(id)?)).await?;
    Ok(Json(serde_json::to_value(view).expect("serializable")))
}

async fn metrics(State(s): State<AppState>) -> ApiResult<serde_json::Value> {
    let series = blocking(move || Ok(s.ws.metric_series()?)).await?;
    Ok(Json(serde_json::to_value(series).expect("serializable")))
}

async fn compare(
    State(s): State<AppState>,
    Query(q): Query<CompareQuery>,
) -> ApiResult<serde_json::Value> {
    let report = blocking(move || Ok(s.ws.compare(q.a, q.b)?)).await?;
    Ok(Json(serde_json::to_value(report).expect("serializable")))
}

async fn run(State(s): State<AppState>, Json(req): Json<RunRequest>) -> Result<Response, ApiError> {
    let Ok(guard) = s.running.clone().try_lock_owned() else {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "a run is already in progress",
        ));
    };
    let mut opts = s.defaults.clone();
    if let Some(b) = req.options.budget_bytes {
        opts.budget_bytes = b;
    }
    if let Some(seed) = req.options.seed {
        opts.seed = seed;
    }
    opts.no_reuse = req.options.no_reuse;
    if req.options.sim_clock {
        opts.clock = Clock::Sim;
    }
    let record = blocking(move || {
        let _guard = guard;
        Ok(engine::run_iteration(&s.ws, &req.source, &opts)?)
    })
    .await?;
    let body = RunResponse {
        version: record.version,
        record,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

/// API routes, with `static_dir` served for every other path when given.
pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/versions", get(list_versions))
        .route("/api/versions/{id}", get(get_version))
        .route("/api/versions/{id}/dag", get(get_dag))
        .route("/api/metrics", get(metrics))
        .route("/api/compare", get(compare))
        .route("/api/run", post(run))
        .with_state(state);
    match static_dir {
        Some(dir) => {
            api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true))
        }
        None => api,
    }
}

/// Serves until the process is stopped.
pub async fn serve(
    addr: SocketAddr,
    state: AppState,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, static_dir)).await
}
