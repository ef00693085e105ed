//! Read-only HTTP search service.
//!
//! Corpora are immutable once ingested. The registry maps corpus ids to
//! shared corpora; ingesting adds an entry and never modifies one, so
//! concurrent searches see the same data as a serial run would.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use snipsearch::ingest::resolve_alphabet;
use snipsearch::miner::DatasetStats;
use snipsearch::{load_index, parse_layout, search_snippet, Corpus, Element, LayoutFormat, SearchError, SearchRequest};
use tower_http::cors::CorsLayer;

use crate::commands::ServeArgs;
use crate::error::CliError;

#[derive(Clone, Default)]
pub struct AppState {
    corpora: Arc<RwLock<BTreeMap<String, Arc<Corpus>>>>,
    /// Corpus used by `/search` when the request names none.
    default_corpus: Option<String>,
}

impl AppState {
    /// State serving `corpus`, which also becomes the default for searches.
    pub fn with_corpus(corpus: Corpus) -> Self {
        let id = corpus.corpus_id.clone();
        let state = Self {
            default_corpus: Some(id),
            ..Self::default()
        };
        state.insert(corpus);
        state
    }

    pub fn insert(&self, corpus: Corpus) -> String {
        let id = corpus.corpus_id.clone();
        self.corpora.write().expect("registry lock").entry(id.clone()).or_insert_with(|| Arc::new(corpus));
        id
    }

    pub fn get(&self, id: &str) -> Option<Arc<Corpus>> {
        self.corpora.read().expect("registry lock").get(id).cloned()
    }
}

pub struct ApiError {
    status: StatusCode,
    body: CliError,
}

impl ApiError {
    fn new(status: StatusCode, body: CliError) -> Self {
        Self { status, body }
    }

    fn unknown_corpus(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            CliError::new("unknown_corpus", format!("unknown corpus `{id}`")).with_detail(json!({ "corpus_id": id })),
        )
    }

    fn malformed_body(e: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, CliError::new("malformed_body", e.to_string()))
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let status = match e {
            SearchError::UnknownDocument(_) | SearchError::UnknownPage(..) => StatusCode::NOT_FOUND,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState, cors: bool) -> Router {
    let app = Router::new()
        .route("/corpora", get(list_corpora).post(ingest_corpus))
        .route("/corpora/{id}/pages/{n}", get(get_page))
        .route("/corpora/{id}/stats", get(corpus_stats))
        .route("/search", post(search))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

#[derive(Serialize)]
struct CorpusSummary {
    corpus_id: String,
    n_pages: usize,
}

async fn list_corpora(State(state): State<AppState>) -> Json<Vec<CorpusSummary>> {
    let reg = state.corpora.read().expect("registry lock");
    Json(
        reg.values()
            .map(|c| CorpusSummary {
                corpus_id: c.corpus_id.clone(),
                n_pages: c.pages.len(),
            })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct IngestBody {
    format: LayoutFormat,
    alphabet_profile: String,
    /// Annotation document, inline as JSON or as a JSON-encoded string.
    payload: Option<Value>,
    path: Option<String>,
}

async fn ingest_corpus(State(state): State<AppState>, body: Bytes) -> ApiResult<CorpusSummary> {
    let body: IngestBody = serde_json::from_slice(&body).map_err(ApiError::malformed_body)?;
    let source = match (body.payload, body.path) {
        (Some(Value::String(s)), None) => Ok(s.into_bytes()),
        (Some(v), None) => Ok(serde_json::to_vec(&v).expect("json value serializes")),
        (None, Some(p)) => Err(p),
        _ => return Err(ApiError::malformed_body("exactly one of `payload` and `path` is required")),
    };
    let corpus = tokio::task::spawn_blocking(move || -> Result<Corpus, CliError> {
        let bytes = match source {
            Ok(b) => b,
            Err(p) => std::fs::read(&p).map_err(|e| CliError::from(e).with_detail(json!({ "path": p })))?,
        };
        let alphabet = resolve_alphabet(&body.alphabet_profile)?;
        Ok(parse_layout(body.format, &bytes, &alphabet)?)
    })
    .await
    .expect("ingest task")
    .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e))?;
    let n_pages = corpus.pages.len();
    let corpus_id = state.insert(corpus);
    Ok(Json(CorpusSummary { corpus_id, n_pages }))
}

#[derive(Serialize)]
struct PagePayload<'a> {
    doc_id: &'a str,
    page_no: usize,
    width: f64,
    height: f64,
    elements: &'a [Element],
    lstr: &'a str,
}

async fn get_page(State(state): State<AppState>, Path((id, n)): Path<(String, usize)>) -> Result<Response, ApiError> {
    let corpus = state.get(&id).ok_or_else(|| ApiError::unknown_corpus(&id))?;
    let page = corpus.pages.get(n).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            CliError::new("unknown_page", format!("corpus `{id}` has {} pages", corpus.pages.len()))
                .with_detail(json!({ "corpus_id": id, "page": n })),
        )
    })?;
    Ok(Json(PagePayload {
        doc_id: &page.doc_id,
        page_no: page.page_no,
        width: page.width,
        height: page.height,
        elements: &page.elements,
        lstr: corpus.lstrs[n].as_str(),
    })
    .into_response())
}

async fn corpus_stats(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<DatasetStats> {
    let corpus = state.get(&id).ok_or_else(|| ApiError::unknown_corpus(&id))?;
    Ok(Json(DatasetStats::from_lstrs(corpus.lstrs.iter().map(|l| l.as_str()))))
}

async fn search(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let mut value: Value = serde_json::from_slice(&body).map_err(ApiError::malformed_body)?;
    let corpus_id = match value.as_object_mut().map(|o| o.remove("corpus_id")) {
        Some(Some(Value::String(id))) => id,
        Some(None) => state
            .default_corpus
            .clone()
            .ok_or_else(|| ApiError::malformed_body("`corpus_id` is required"))?,
        Some(Some(_)) => return Err(ApiError::malformed_body("`corpus_id` must be a string")),
        None => return Err(ApiError::malformed_body("request body must be a JSON object")),
    };
    let req: SearchRequest = serde_json::from_value(value).map_err(ApiError::malformed_body)?;
    let corpus = state.get(&corpus_id).ok_or_else(|| ApiError::unknown_corpus(&corpus_id))?;
    let resp = tokio::task::spawn_blocking(move || search_snippet(&corpus, &req))
        .await
        .expect("search task")?;
    Ok(Json(resp).into_response())
}

pub async fn serve(state: AppState, addr: SocketAddr, cors: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, cors)).await
}

pub fn serve_blocking(a: ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let corpus = load_index(&a.index.index)?;
    tracing::info!(corpus_id = %corpus.corpus_id, pages = corpus.pages.len(), "index loaded");
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::invalid_argument(format!("bad listen address: {e}")))?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve(AppState::with_corpus(corpus), addr, a.cors))?;
    Ok(())
}
