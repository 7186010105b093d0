//! HTTP JSON API for live edit sessions.
//!
//! A user utterance produces a proposed command with its gate trace; a human
//! accepts or overrides it, and the executor applies it to the session's
//! current image. Requests for one session are serialized; distinct
//! sessions run concurrently and share the proposer read-only.

pub mod api;
pub mod config;
pub mod proposer;
pub mod session;

use std::path::Path;
use std::sync::Arc;

use caise_core::synth::{render_entry, synth_corpus};
use caise_core::{CommandError, Corpus, ExecError, ImageStore};
use caise_model::GenExt;
use thiserror::Error;

pub use api::{router, AppState, ErrorBody};
pub use config::ServiceConfig;
pub use proposer::{Proposal, Proposer, ScriptedProposer};
pub use session::{PendingProposal, Resolution, Resolved, Session, Snapshot};

/// JSON Schema for every 2xx response body and the error body.
pub const API_SCHEMA: &str = include_str!("../schema/api.schema.json");

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    SessionNotFound(String),
    #[error("no image at index {0}")]
    ImageNotFound(usize),
    #[error("a proposal is already pending; resolve it first")]
    ProposalPending,
    #[error("no proposal is pending")]
    NoPendingProposal,
    #[error("utterance has no tokens")]
    EmptyUtterance,
    #[error("proposal `{0}` is not a valid command; override it")]
    UnparseableProposal(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error(transparent)]
    Command(#[from] CommandError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("model: {0}")]
    Model(String),
    #[error("config: {0}")]
    Config(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    /// HTTP status and stable error class.
    pub fn status_and_class(&self) -> (u16, &'static str) {
        match self {
            ServiceError::SessionNotFound(_) => (404, "SessionNotFound"),
            ServiceError::ImageNotFound(_) => (404, "ImageNotFound"),
            ServiceError::ProposalPending => (409, "ProposalPending"),
            ServiceError::NoPendingProposal => (409, "NoPendingProposal"),
            ServiceError::EmptyUtterance => (400, "EmptyUtterance"),
            ServiceError::UnparseableProposal(_) => (400, "UnparseableProposal"),
            ServiceError::BadRequest(_) => (400, "BadRequest"),
            ServiceError::Command(e) => (400, e.class()),
            ServiceError::Exec(e @ (ExecError::NoCurrentImage | ExecError::SearchEmpty | ExecError::CutoutFailed(_))) => (422, e.class()),
            ServiceError::Exec(e) => (500, e.class()),
            ServiceError::Model(_) => (500, "ModelError"),
            ServiceError::Config(_) => (500, "ConfigError"),
            ServiceError::Internal(_) => (500, "InternalError"),
        }
    }
}

/// Loads the proposer and corpus named by `cfg`.
pub fn build_state(cfg: &ServiceConfig) -> Result<AppState, ServiceError> {
    let (proposer, feature_dim): (Arc<dyn Proposer>, usize) = match (&cfg.checkpoint, &cfg.script) {
        (Some(ckpt), _) => {
            let model = GenExt::load(ckpt).map_err(|e| ServiceError::Config(format!("{}: {e}", ckpt.display())))?;
            let fd = model.config.feature_dim;
            (Arc::new(model), fd)
        }
        (None, Some(script)) => (Arc::new(ScriptedProposer::load(script)?), cfg.feature_dim),
        (None, None) => return Err(ServiceError::Config("set a checkpoint or a script".into())),
    };
    let corpus = load_corpus(cfg.corpus.as_deref(), cfg, feature_dim)?;
    Ok(AppState::new(proposer, Arc::new(corpus)))
}

fn load_corpus(manifest: Option<&Path>, cfg: &ServiceConfig, feature_dim: usize) -> Result<Corpus, ServiceError> {
    let result = match manifest {
        Some(m) => Corpus::ingest(m, feature_dim),
        None => Corpus::from_entries(
            synth_corpus(cfg.synthetic_corpus_seed, cfg.synthetic_corpus_size),
            ImageStore::Rendered(render_entry),
            feature_dim,
        ),
    };
    result.map_err(|e| ServiceError::Config(format!("corpus: {e}")))
}

/// Binds `host:port` and serves until Ctrl-C.
pub async fn serve(cfg: &ServiceConfig, state: AppState) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", cfg.host, cfg.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ServiceError::Config(format!("bind {addr}: {e}")))?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
