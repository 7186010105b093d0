//! Routes, request/response bodies and error mapping.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Instant;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use caise_core::{Corpus, CorpusError};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::proposer::Proposer;
use crate::session::{Resolution, Session};
use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, class) = self.status_and_class();
        let status = StatusCode::from_u16(status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        let body = ErrorBody {
            error: class.to_string(),
            message: self.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

struct Inner {
    proposer: Arc<dyn Proposer>,
    corpus: Arc<Corpus>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(proposer: Arc<dyn Proposer>, corpus: Arc<Corpus>) -> Self {
        AppState(Arc::new(Inner {
            proposer,
            corpus,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }))
    }

    pub fn corpus(&self) -> &Corpus {
        &self.0.corpus
    }

    pub fn create_session(&self) -> String {
        let id = format!("s{:06}", self.0.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Arc::new(Mutex::new(Session::new(id.clone())));
        self.0.sessions.write().expect("session map poisoned").insert(id.clone(), session);
        id
    }

    pub fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.0
            .sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchQuery {
    pub q: String,
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub rank: usize,
    pub id: String,
    pub caption: String,
    pub matched: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub hits: Vec<SearchResult>,
}

pub const DEFAULT_SEARCH_K: usize = 10;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/utterance", post(post_utterance))
        .route("/sessions/{id}/resolve", post(resolve))
        .route("/sessions/{id}/images/{n}", get(get_image))
        .route("/corpus/search", get(search))
        .layer(middleware::from_fn(log_request))
        .with_state(state)
}

async fn log_request(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_string();
    let start = Instant::now();
    let res = next.run(req).await;
    tracing::info!(
        method = %method,
        path = %path,
        status = res.status().as_u16(),
        micros = start.elapsed().as_micros() as u64,
        "request"
    );
    res
}

fn bad_json(e: JsonRejection) -> ServiceError {
    ServiceError::BadRequest(e.body_text())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(e.to_string()))
}

async fn create_session(State(state): State<AppState>) -> (StatusCode, Json<Created>) {
    (StatusCode::CREATED, Json(Created { session_id: state.create_session() }))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let session = state.session(&id)?;
    let snapshot = session.lock().await.snapshot();
    Ok(Json(snapshot).into_response())
}

async fn post_utterance(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<UtteranceRequest>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let session = state.session(&id)?;
    let Json(req) = body.map_err(bad_json)?;
    let mut guard = session.lock_owned().await;
    let proposer = state.0.proposer.clone();
    let pending = blocking(move || guard.add_utterance(&req.text, proposer.as_ref()).cloned()).await??;
    Ok(Json(pending).into_response())
}

async fn resolve(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Resolution>, JsonRejection>,
) -> Result<Response, ServiceError> {
    let session = state.session(&id)?;
    let Json(resolution) = body.map_err(bad_json)?;
    let mut guard = session.lock_owned().await;
    let corpus = state.0.corpus.clone();
    let resolved = blocking(move || guard.resolve(&resolution, corpus.as_ref())).await??;
    Ok(Json(resolved).into_response())
}

async fn get_image(State(state): State<AppState>, path: Result<Path<(String, String)>, PathRejection>) -> Result<Response, ServiceError> {
    let Path((id, n)) = path.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let session = state.session(&id)?;
    let n: usize = n.parse().map_err(|_| ServiceError::BadRequest(format!("image index `{n}` is not a number")))?;
    let guard = session.lock_owned().await;
    let png = blocking(move || guard.image_png(n)).await??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn search(State(state): State<AppState>, query: Result<Query<SearchQuery>, QueryRejection>) -> Result<Response, ServiceError> {
    let Query(q) = query.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let tokens = caise_core::text::tokenize(&q.q);
    let k = q.k.unwrap_or(DEFAULT_SEARCH_K);
    let corpus = state.corpus();
    let hits = match corpus.index().search(&tokens, k) {
        Ok(h) => h,
        Err(CorpusError::SearchEmpty) => Vec::new(),
        Err(CorpusError::EmptyQuery) => return Err(ServiceError::BadRequest("query is empty".into())),
        Err(e) => return Err(ServiceError::Internal(e.to_string())),
    };
    let hits = hits
        .into_iter()
        .enumerate()
        .map(|(i, h)| SearchResult {
            rank: i + 1,
            caption: corpus.entry(&h.id).map(|e| e.caption.clone()).unwrap_or_default(),
            id: h.id,
            matched: h.matched,
            total: h.total,
        })
        .collect();
    Ok(Json(SearchResponse { hits }).into_response())
}
