//! HTTP query service.
//!
//! ```text
//! POST /api/query                               multipart: sketch (PNG), top_k, scorer
//! GET  /api/objects/{id}/views/{ring}/{view}    gallery render (PNG)
//! GET  /api/health                              {"status":"ok"}
//! ```
//!
//! All retrievers are built once at startup and shared read-only between
//! requests.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ringview::image::{ImageKind, ViewImage};
use ringview::pipeline::{Pipeline, ScorerChoice, Strategy};
use ringview::render::CameraPose;
use ringview::retrieval::{RankedList, Retriever, ScoreOrder};
use ringview::Error;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOP_K: usize = 10;
const MAX_UPLOAD_BYTES: usize = 8 * 1024 * 1024;

pub struct AppState {
    retrievers: BTreeMap<String, Arc<Retriever>>,
    default_scorer: String,
    object_ids: Vec<String>,
    poses: Vec<CameraPose>,
    renders: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultItem {
    pub rank: usize,
    pub object_id: String,
    /// Higher is better; distances are negated.
    pub score: f64,
    /// The scorer's own value (a distance for `min_l2`).
    pub raw_score: f64,
    pub views: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub scorer: String,
    pub top_k: usize,
    pub results: Vec<ResultItem>,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

pub struct ApiError(StatusCode, String);

impl ApiError {
    pub fn status(&self) -> StatusCode {
        self.0
    }

    pub fn message(&self) -> &str {
        &self.1
    }

    fn bad_request(msg: impl Into<String>) -> Self {
        Self(StatusCode::BAD_REQUEST, msg.into())
    }

    fn not_found(msg: impl Into<String>) -> Self {
        Self(StatusCode::NOT_FOUND, msg.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptySketch | Error::Image(_) | Error::InvalidArgument(_) => {
                Self::bad_request(e.to_string())
            }
            Error::NotFound(_) => Self::not_found(e.to_string()),
            other => Self(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        }
    }
}

fn strategy_name(s: Strategy) -> String {
    match s {
        Strategy::Fused => "fused".into(),
        Strategy::Single(ScorerChoice::MinL2) => "min_l2".into(),
        Strategy::Single(ScorerChoice::Top6SumMax) => "top6_sum_max".into(),
        Strategy::Single(ScorerChoice::Embedding) => "embedding".into(),
    }
}

impl AppState {
    /// Loads the index and every retriever the artifacts allow: both
    /// handcrafted scorers always, the embedding scorer when checkpoints
    /// exist, and the configured fusion.
    pub fn load(pipeline: &Pipeline) -> ringview::Result<Self> {
        let index = pipeline.load_index()?;
        let mut retrievers = BTreeMap::new();
        for choice in [ScorerChoice::MinL2, ScorerChoice::Top6SumMax] {
            let s = Strategy::Single(choice);
            retrievers.insert(strategy_name(s), Arc::new(pipeline.retriever(s)?));
        }
        if pipeline.load_models().is_ok() {
            let s = Strategy::Single(ScorerChoice::Embedding);
            retrievers.insert(strategy_name(s), Arc::new(pipeline.retriever(s)?));
        }
        let default = pipeline.default_strategy();
        if default == Strategy::Fused {
            retrievers.insert(
                strategy_name(default),
                Arc::new(pipeline.retriever(default)?),
            );
        }
        let default_scorer = strategy_name(default);
        if !retrievers.contains_key(&default_scorer) {
            return Err(Error::NotFound(format!(
                "artifacts for the {default_scorer} scorer"
            )));
        }
        let cfg = &pipeline.config;
        Ok(Self {
            retrievers,
            default_scorer,
            object_ids: index.object_ids(),
            poses: cfg.render.layout.poses(cfg.render.distance)?,
            renders: cfg.output_dir.join("renders"),
        })
    }

    pub fn scorers(&self) -> Vec<&str> {
        self.retrievers.keys().map(String::as_str).collect()
    }

    fn view_urls(&self, object_id: &str) -> Vec<String> {
        self.poses
            .iter()
            .map(|p| {
                format!(
                    "/api/objects/{object_id}/views/{}/{}",
                    p.ring_index, p.azimuth_index
                )
            })
            .collect()
    }

    /// Ranks a decoded sketch; the shared code path of the service and the
    /// CLI `query` command.
    pub fn query(
        &self,
        sketch: &ViewImage,
        scorer: Option<&str>,
        top_k: usize,
    ) -> Result<QueryResponse, ApiError> {
        if top_k == 0 {
            return Err(ApiError::bad_request("top_k must be at least 1"));
        }
        let name = scorer.unwrap_or(&self.default_scorer);
        let retriever = self.retrievers.get(name).ok_or_else(|| {
            ApiError::bad_request(format!(
                "unknown scorer {name:?}; available: {}",
                self.scorers().join(", ")
            ))
        })?;
        let list = retriever.rank("query", sketch)?;
        Ok(self.response(name, top_k, &list))
    }

    fn response(&self, scorer: &str, top_k: usize, list: &RankedList) -> QueryResponse {
        let sign = match list.order {
            ScoreOrder::Descending => 1.0,
            ScoreOrder::Ascending => -1.0,
        };
        let results = list
            .ranking
            .iter()
            .take(top_k)
            .enumerate()
            .map(|(i, item)| ResultItem {
                rank: i + 1,
                object_id: item.object_id.clone(),
                score: sign * item.score,
                raw_score: item.score,
                views: self.view_urls(&item.object_id),
            })
            .collect();
        QueryResponse {
            scorer: scorer.to_string(),
            top_k,
            results,
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/query", post(query))
        .route("/api/objects/{id}/views/{ring}/{view}", get(view))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn query(
    State(state): State<Arc<AppState>>,
    mut form: Multipart,
) -> Result<Json<QueryResponse>, ApiError> {
    let mut sketch = None;
    let mut top_k = DEFAULT_TOP_K;
    let mut scorer = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("unreadable field {name}: {e}")))?;
        match name.as_str() {
            "sketch" => sketch = Some(bytes),
            "top_k" => {
                top_k = std::str::from_utf8(&bytes)
                    .ok()
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| ApiError::bad_request("top_k must be a positive integer"))?
            }
            "scorer" => scorer = Some(String::from_utf8_lossy(&bytes).trim().to_string()),
            _ => {}
        }
    }
    let bytes = sketch.ok_or_else(|| ApiError::bad_request("missing sketch field"))?;
    let result = tokio::task::spawn_blocking(move || {
        let img = ViewImage::from_encoded(&bytes, ImageKind::Sketch)
            .map_err(|e| ApiError::bad_request(format!("malformed image: {e}")))?;
        state.query(&img, scorer.as_deref(), top_k)
    })
    .await
    .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(result))
}

async fn view(
    State(state): State<Arc<AppState>>,
    UrlPath((id, ring, view)): UrlPath<(String, usize, usize)>,
) -> Result<Response, ApiError> {
    if !state.object_ids.contains(&id) {
        return Err(ApiError::not_found(format!("unknown object {id}")));
    }
    if !state
        .poses
        .iter()
        .any(|p| p.ring_index == ring && p.azimuth_index == view)
    {
        return Err(ApiError::not_found(format!(
            "no view {view} on ring {ring}"
        )));
    }
    let path = state
        .renders
        .join(&id)
        .join(format!("ring{ring}"))
        .join(format!("view{view}.png"));
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::not_found(format!("render {} is missing", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}
