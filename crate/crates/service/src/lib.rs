//! HTTP search API over a loaded index snapshot.
//!
//! Every handler takes one [`IndexHandle::snapshot`] up front, so a reindex
//! swapped in mid-request is never half observed.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;

use screenlens_core::docmodel::format_timestamp;
use screenlens_core::{IndexHandle, InvertedIndex, ScreenshotDocument};

pub const DEFAULT_PAGE_SIZE: usize = 20;
pub const MAX_PAGE_SIZE: usize = 100;
pub const EXCERPT_CHARS: usize = 200;

#[derive(Clone)]
pub struct AppState {
    pub index: IndexHandle,
    /// Directory that relative image paths and `<id>.<ext>` lookups resolve against.
    pub images: Option<PathBuf>,
}

impl AppState {
    pub fn new(index: IndexHandle, images: Option<PathBuf>) -> Self {
        Self { index, images }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchRequest {
    pub q: String,
    pub category: Option<String>,
    pub page: usize,
    pub page_size: usize,
}

impl SearchRequest {
    /// Validate raw query-string parameters.
    pub fn from_params(params: &HashMap<String, String>) -> Result<Self, String> {
        let int = |key: &str, default: usize| -> Result<usize, String> {
            match params.get(key) {
                None => Ok(default),
                Some(v) => v.trim().parse().map_err(|_| format!("{key} must be a positive integer, got {v:?}")),
            }
        };
        let page = int("page", 1)?;
        let page_size = int("page_size", DEFAULT_PAGE_SIZE)?;
        if page < 1 {
            return Err("page must be >= 1".into());
        }
        if !(1..=MAX_PAGE_SIZE).contains(&page_size) {
            return Err(format!("page_size must be between 1 and {MAX_PAGE_SIZE}"));
        }
        Ok(Self {
            q: params.get("q").cloned().unwrap_or_default(),
            category: params.get("category").filter(|c| !c.trim().is_empty()).cloned(),
            page,
            page_size,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HitView {
    pub id: String,
    pub timestamp: String,
    pub category: Option<String>,
    pub score: f64,
    pub excerpt: String,
    pub image: String,
    pub previous: Option<String>,
    pub next: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResponse {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub hits: Vec<HitView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocView {
    pub id: String,
    pub timestamp: String,
    pub category: Option<String>,
    pub text: String,
    pub previous_image: Option<String>,
    pub next_image: Option<String>,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbors {
    pub previous: Option<String>,
    pub next: Option<String>,
}

/// First `EXCERPT_CHARS` characters of `text`.
pub fn excerpt(text: &str) -> String {
    text.chars().take(EXCERPT_CHARS).collect()
}

fn image_url(id: &str) -> String {
    format!("/doc/{id}/image")
}

/// Map a stored timeline link back to a document id: either the id itself
/// or an image file whose stem is the id.
pub fn resolve_link(index: &InvertedIndex, link: Option<&str>) -> Option<String> {
    let link = link?;
    if index.get(link).is_some() {
        return Some(link.to_owned());
    }
    let stem = Path::new(link).file_stem()?.to_str()?;
    index.get(stem).map(|d| d.id.clone())
}

pub fn neighbors(index: &InvertedIndex, doc: &ScreenshotDocument) -> Neighbors {
    Neighbors {
        previous: resolve_link(index, doc.previous_image.as_deref()),
        next: resolve_link(index, doc.next_image.as_deref()),
    }
}

/// Run a paginated search against one snapshot.
pub fn search_page(index: &InvertedIndex, req: &SearchRequest) -> SearchResponse {
    let all = index.search_all(&req.q, req.category.as_deref());
    let start = (req.page - 1).saturating_mul(req.page_size);
    let hits = all
        .iter()
        .skip(start)
        .take(req.page_size)
        .filter_map(|h| {
            let doc = index.document(h.ordinal)?;
            let n = neighbors(index, doc);
            Some(HitView {
                id: doc.id.clone(),
                timestamp: format_timestamp(&doc.timestamp),
                category: doc.category.clone(),
                score: h.score,
                excerpt: excerpt(&doc.text),
                image: image_url(&doc.id),
                previous: n.previous,
                next: n.next,
            })
        })
        .collect();
    SearchResponse { total: all.len(), page: req.page, page_size: req.page_size, hits }
}

/// Where the image for `doc` should be on disk.
pub fn image_location(doc: &ScreenshotDocument, images: Option<&Path>) -> Option<PathBuf> {
    if let Some(p) = &doc.image_path {
        return Some(match images {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.clone(),
        });
    }
    let dir = images?;
    ["png", "jpg", "jpeg", "PNG", "JPG", "JPEG"]
        .iter()
        .map(|ext| dir.join(format!("{}.{ext}", doc.id)))
        .find(|p| p.is_file())
        .or_else(|| Some(dir.join(format!("{}.png", doc.id))))
}

pub fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        _ => "application/octet-stream",
    }
}

fn error(status: StatusCode, message: String, id: Option<&str>) -> Response {
    #[derive(Serialize)]
    struct Body<'a> {
        error: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        id: Option<&'a str>,
    }
    (status, Json(Body { error: message, id })).into_response()
}

fn not_found(id: &str) -> Response {
    error(StatusCode::NOT_FOUND, format!("unknown document {id}"), Some(id))
}

async fn search_handler(State(state): State<AppState>, Query(params): Query<HashMap<String, String>>) -> Response {
    match SearchRequest::from_params(&params) {
        Ok(req) => Json(search_page(&state.index.snapshot(), &req)).into_response(),
        Err(msg) => error(StatusCode::BAD_REQUEST, msg, None),
    }
}

async fn doc_handler(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let index = state.index.snapshot();
    let Some(doc) = index.get(&id) else { return not_found(&id) };
    Json(DocView {
        id: doc.id.clone(),
        timestamp: format_timestamp(&doc.timestamp),
        category: doc.category.clone(),
        text: doc.text.clone(),
        previous_image: doc.previous_image.clone(),
        next_image: doc.next_image.clone(),
        image: image_url(&doc.id),
    })
    .into_response()
}

async fn image_handler(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let index = state.index.snapshot();
    let Some(doc) = index.get(&id) else { return not_found(&id) };
    let Some(path) = image_location(doc, state.images.as_deref()) else {
        return error(StatusCode::GONE, format!("no image recorded for {id}"), Some(&id));
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            error(StatusCode::GONE, format!("image for {id} is no longer on disk"), Some(&id))
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("reading image for {id}: {e}"), Some(&id)),
    }
}

async fn neighbors_handler(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> Response {
    let index = state.index.snapshot();
    match index.get(&id) {
        Some(doc) => Json(neighbors(&index, doc)).into_response(),
        None => not_found(&id),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/search", get(search_handler))
        .route("/doc/{id}", get(doc_handler))
        .route("/doc/{id}/image", get(image_handler))
        .route("/doc/{id}/neighbors", get(neighbors_handler))
        .with_state(state)
}

/// Bind `addr` and serve until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
