//! JSON API over a loaded pipeline, plus the built UI as static files.

use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use medrag_core::eval::{list_reports, read_report, RunReport, RunSummary};
use medrag_core::orchestrator::{Answer, Pipeline, Query, QueryMode};

use crate::commands::load_pipeline;
use crate::config::AppConfig;
use crate::error::{ApiError, ErrorCode};

pub struct AppState {
    config: AppConfig,
    pipeline: RwLock<Arc<Pipeline>>,
}

impl AppState {
    pub fn new(config: AppConfig, pipeline: Pipeline) -> Self {
        Self {
            config,
            pipeline: RwLock::new(Arc::new(pipeline)),
        }
    }

    /// Loads the knowledge base named by the config.
    pub fn load(config: AppConfig) -> Result<Self, ApiError> {
        let pipeline = load_pipeline(&config)?;
        Ok(Self::new(config, pipeline))
    }

    /// The pipeline in use. Requests keep the one they started with across a
    /// reload.
    pub fn pipeline(&self) -> Arc<Pipeline> {
        self.pipeline.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Builds a pipeline from disk and swaps it in; the old one stays on
    /// failure.
    pub fn reload(&self) -> Result<usize, ApiError> {
        let next = Arc::new(load_pipeline(&self.config)?);
        let size = index_size(&next);
        *self.pipeline.write().unwrap_or_else(|e| e.into_inner()) = next;
        Ok(size)
    }
}

fn index_size(p: &Pipeline) -> usize {
    p.kb().manifest().chunk_count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedSource {
    pub chunk_id: String,
    pub pmid: String,
    pub section_title: String,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub image_id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    pub cited_sources: Vec<CitedSource>,
    pub images: Vec<ImageRef>,
    pub mode: QueryMode,
    pub latency_ms: u64,
    pub degraded: bool,
    pub warnings: Vec<String>,
}

impl From<Answer> for QueryResponse {
    /// Cited sources follow citation order.
    fn from(a: Answer) -> Self {
        let cited_sources = a
            .cited_chunk_ids
            .iter()
            .filter_map(|id| a.retrieval.hits.iter().find(|h| &h.chunk.chunk_id == id))
            .map(|h| CitedSource {
                chunk_id: h.chunk.chunk_id.clone(),
                pmid: h.chunk.pmid.clone(),
                section_title: h.chunk.section_title.clone(),
                text: h.chunk.text.clone(),
                score: h.hit.score,
            })
            .collect();
        let images = a
            .image_ids
            .iter()
            .map(|id| ImageRef {
                image_id: id.clone(),
                url: format!("/api/images/{id}"),
            })
            .collect();
        Self {
            answer: a.text,
            cited_sources,
            images,
            mode: a.mode,
            latency_ms: a.latency_ms,
            degraded: a.degraded,
            warnings: a.warnings,
        }
    }
}

type Shared = Arc<AppState>;

async fn health(State(state): State<Shared>) -> Json<Value> {
    Json(json!({"status": "ok", "index_size": index_size(&state.pipeline())}))
}

async fn query(
    State(state): State<Shared>,
    body: Result<Json<Query>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(query) = body.map_err(|e| ApiError::new(ErrorCode::BadRequest, e.body_text()))?;
    query.validate()?;
    let pipeline = state.pipeline();
    let answer = tokio::task::spawn_blocking(move || pipeline.answer_query(&query))
        .await
        .map_err(|e| ApiError::internal(format!("query task failed: {e}")))??;
    Ok(Json(answer.into()))
}

async fn image(State(state): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let pipeline = state.pipeline();
    let img = pipeline
        .kb()
        .objects()
        .image(&id)
        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, format!("no image `{id}`")))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], img.bytes.clone()).into_response())
}

async fn runs(State(state): State<Shared>) -> Result<Json<Vec<RunSummary>>, ApiError> {
    Ok(Json(list_reports(&state.config.paths.runs_dir)?))
}

async fn run(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<RunReport>, ApiError> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) || id.contains("..") {
        return Err(ApiError::new(ErrorCode::BadRequest, format!("invalid run id `{id}`")));
    }
    Ok(Json(read_report(&state.config.paths.runs_dir, &id)?))
}

async fn reload(State(state): State<Shared>) -> Result<Json<Value>, ApiError> {
    let size = tokio::task::spawn_blocking(move || state.reload())
        .await
        .map_err(|e| ApiError::internal(format!("reload task failed: {e}")))??;
    Ok(Json(json!({"status": "reloaded", "index_size": size})))
}

async fn api_not_found(uri: Uri) -> ApiError {
    ApiError::new(ErrorCode::NotFound, format!("no route {}", uri.path()))
}

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/query", post(query))
        .route("/images/{id}", get(image))
        .route("/runs", get(runs))
        .route("/runs/{id}", get(run))
        .route("/admin/reload", post(reload))
        .fallback(api_not_found);
    let app = Router::new().nest("/api", api);
    let app = match &state.config.paths.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(|| async { StatusCode::NOT_FOUND }),
    };
    app.with_state(state)
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
    log::info!("shutting down, draining in-flight requests");
}

/// Serves until SIGINT or SIGTERM; in-flight requests complete first.
pub async fn serve(state: AppState) -> Result<(), ApiError> {
    let addr = format!("{}:{}", state.config.server.host, state.config.server.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| ApiError::new(ErrorCode::UpstreamUnavailable, format!("cannot bind {addr}: {e}")))?;
    log::info!("listening on http://{addr}");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(shutdown_signal())
        .await
        .map_err(|e| ApiError::internal(format!("server error: {e}")))
}
