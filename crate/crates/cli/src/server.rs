//! HTTP API under `/v1`.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use nl2sql::critic::{BadAnswerSource, IngestRecord, KnowledgeBase};
use nl2sql::pipeline::Catalog;
use nl2sql::{canonical, AblationFlags, Error, Pipeline};
use serde::Deserialize;
use serde_json::{json, Map, Value};

struct Shared {
    pipeline: Pipeline,
    catalog: Catalog,
    kb_path: Option<PathBuf>,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(pipeline: Pipeline, catalog: Catalog, kb_path: Option<PathBuf>) -> Self {
        Self(Arc::new(Shared {
            pipeline,
            catalog,
            kb_path,
        }))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/databases", get(databases))
        .route("/v1/schema/{database_id}", get(schema))
        .route("/v1/query", post(query))
        .route("/v1/kb/ingest", post(ingest))
        .with_state(state)
}

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    Internal(String),
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFound(m) => ApiError::NotFound(m),
            Error::Config(m) => ApiError::BadRequest(m),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::Internal(detail) => {
                let id = uuid::Uuid::new_v4().to_string();
                tracing::error!(error_id = %id, %detail, "request failed");
                (
                    StatusCode::INTERNAL_SERVER_ERROR,
                    json!({ "error": "internal error", "id": id }),
                )
            }
        };
        canonical_json(status, &body)
    }
}

fn canonical_json<T: serde::Serialize>(status: StatusCode, value: &T) -> Response {
    match canonical::to_string(value) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => ApiError::Internal(e.to_string()).into_response(),
    }
}

fn ok<T: serde::Serialize>(value: &T) -> Response {
    canonical_json(StatusCode::OK, value)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

async fn health() -> Response {
    ok(&json!({ "status": "ok" }))
}

async fn databases(State(state): State<AppState>) -> Response {
    ok(&state.0.catalog.ids())
}

async fn schema(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let card = blocking(move || {
        let db = state.0.catalog.get(&id)?;
        Ok(state.0.pipeline.card_for(db)?)
    })
    .await?;
    Ok(ok(&*card))
}

/// Flags given as a partial object over the defaults. Unknown names are an
/// error rather than silently ignored.
fn parse_flags(value: Option<Value>) -> Result<AblationFlags, ApiError> {
    let Some(value) = value else {
        return Ok(AblationFlags::default());
    };
    let obj: Map<String, Value> = match value {
        Value::Object(o) => o,
        Value::Null => return Ok(AblationFlags::default()),
        _ => return Err(ApiError::BadRequest("`flags` must be an object".into())),
    };
    for key in obj.keys() {
        if key != "prompt_style" && !AblationFlags::NAMES.contains(&key.as_str()) {
            return Err(ApiError::BadRequest(format!("unknown flag `{key}`")));
        }
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| ApiError::BadRequest(format!("flags: {e}")))
}

#[derive(Deserialize)]
struct QueryRequest {
    question: String,
    database_id: String,
    #[serde(default)]
    flags: Option<Value>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request body: {e}")))
}

async fn query(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: QueryRequest = parse_body(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::BadRequest("`question` must not be empty".into()));
    }
    let flags = parse_flags(req.flags)?;
    let trace = blocking(move || {
        let s = &state.0;
        Ok(s.pipeline.run_query_in(&s.catalog, &req.question, &req.database_id, &flags)?)
    })
    .await?;
    Ok(ok(&trace))
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum BadAnswers {
    Perturbation,
    Model,
}

#[derive(Deserialize)]
struct IngestRequest {
    database_id: String,
    records: Vec<IngestRecord>,
    #[serde(default)]
    bad_answers: Option<BadAnswers>,
}

async fn ingest(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: IngestRequest = parse_body(&body)?;
    let report = blocking(move || {
        let s = &state.0;
        let db = s.catalog.get(&req.database_id)?;
        let card = s.pipeline.card_for(db)?;
        let critic = Arc::clone(&s.pipeline.gateways().critic);
        let source = match req.bad_answers {
            Some(BadAnswers::Model) => BadAnswerSource::Model(critic.as_ref()),
            _ => BadAnswerSource::Perturbation,
        };
        let mut kb = s.pipeline.knowledge_base_mut();
        let before = kb.len();
        let report = kb.ingest(&req.records, &card, Some(db), source);
        if let Some(path) = &s.kb_path {
            KnowledgeBase::append_to(path, &kb.entries()[before..])?;
        }
        Ok(report)
    })
    .await?;
    Ok(ok(&report))
}
