//! HTTP routes. Bodies are JSON; errors are `{code, message, field?}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use termset_core::expansion::{ExpandParams, DEFAULT_K, DEFAULT_POOL_SIZE};
use termset_core::GroupId;

use crate::error::{Result, ServiceError};
use crate::pipeline::TrainRequest;
use crate::project::{CorpusFormat, DEFAULT_PAGE};
use crate::render;
use crate::store::Store;

pub const DEFAULT_SNIPPETS: usize = 10;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" => StatusCode::CONFLICT,
            "bad_request" | "bad_data" | "mode_error" => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            field: self.field().map(str::to_string),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        json_response(self.status(), &self.body())
    }
}

fn json_response<T: Serialize + ?Sized>(status: StatusCode, value: &T) -> Response {
    match render::json(value) {
        Ok(body) => (status, [(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn ok<T: Serialize + ?Sized>(value: &T) -> Response {
    json_response(StatusCode::OK, value)
}

/// Deserializes a JSON body, reporting the path of the offending field.
pub fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ServiceError::BadRequest {
            message: format!("malformed request body: {}", e.inner()),
            field: (path != "." && path != "?").then_some(path),
        }
    })
}

fn query_usize(q: &HashMap<String, String>, key: &str, default: usize) -> Result<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| ServiceError::BadRequest {
            message: format!("{key} must be a non-negative integer, got {v:?}"),
            field: Some(key.to_string()),
        }),
    }
}

/// Runs blocking project work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T>
where
    F: FnOnce() -> Result<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

type AppState = Arc<Store>;

pub fn router(store: Arc<Store>, max_body_bytes: usize) -> Router {
    Router::new()
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/corpus", post(upload_corpus))
        .route("/projects/{id}/train", post(train))
        .route("/projects/{id}/jobs/{jid}", get(get_job))
        .route("/projects/{id}/groups", get(list_groups))
        .route("/projects/{id}/groups/{gid}", get(get_group))
        .route("/projects/{id}/groups/{gid}/snippets", get(snippets))
        .route("/projects/{id}/expand", post(expand))
        .route("/projects/{id}/sessions/{sid}", get(get_session))
        .route("/projects/{id}/sessions/{sid}/validate", post(validate))
        .route("/projects/{id}/sessions/{sid}/reexpand", post(reexpand))
        .route("/projects/{id}/sessions/{sid}/save", post(save))
        .route("/projects/{id}/export/{category}", get(export))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()) })
        .layer(DefaultBodyLimit::max(max_body_bytes))
        .with_state(store)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    name: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

async fn create_project(State(store): State<AppState>, body: Bytes) -> Result<Response> {
    let req: CreateProject = parse_body(&body)?;
    let id = blocking(move || Ok(store.create(&req.name)?.read().id().to_string())).await?;
    Ok(json_response(StatusCode::CREATED, &Created { id }))
}

async fn get_project(State(store): State<AppState>, Path(id): Path<String>) -> Result<Response> {
    let h = store.get(&id)?;
    let summary = h.read().summary();
    Ok(ok(&summary))
}

fn corpus_format(headers: &HeaderMap) -> Result<CorpusFormat> {
    if let Some(v) = headers.get("x-corpus-format") {
        let v = v.to_str().map_err(|_| ServiceError::bad_request("invalid X-Corpus-Format header"))?;
        return v.parse().map_err(|m: String| ServiceError::BadRequest {
            message: m,
            field: Some("X-Corpus-Format".into()),
        });
    }
    let conllu = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.to_ascii_lowercase().contains("conll"));
    Ok(if conllu {
        CorpusFormat::Conllu
    } else {
        CorpusFormat::Text
    })
}

async fn upload_corpus(
    State(store): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response> {
    let format = corpus_format(&headers)?;
    let job = blocking(move || {
        let h = store.get(&id)?;
        store.submit_ingest(&h, body.to_vec(), format)
    })
    .await?;
    Ok(json_response(StatusCode::ACCEPTED, &job))
}

async fn train(State(store): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let req: TrainRequest = parse_body(&body)?;
    let job = blocking(move || {
        let h = store.get(&id)?;
        if h.read().meta.corpus.is_none() && !has_pending_ingest(&h.read().meta.jobs) {
            return Err(ServiceError::Conflict("no corpus ingested yet".into()));
        }
        store.submit_train(&h, &req)
    })
    .await?;
    Ok(json_response(StatusCode::ACCEPTED, &job))
}

fn has_pending_ingest(jobs: &[crate::project::Job]) -> bool {
    use crate::project::{JobKind, JobState};
    jobs.iter()
        .any(|j| j.kind == JobKind::Ingest && matches!(j.state, JobState::Queued | JobState::Running))
}

async fn get_job(State(store): State<AppState>, Path((id, jid)): Path<(String, String)>) -> Result<Response> {
    let h = store.get(&id)?;
    let p = h.read();
    Ok(ok(p.job(&jid)?))
}

async fn list_groups(
    State(store): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let offset = query_usize(&q, "offset", 0)?;
    let limit = query_usize(&q, "limit", DEFAULT_PAGE)?;
    let filter = q.get("filter").map(String::as_str).filter(|f| !f.is_empty());
    let h = store.get(&id)?;
    let page = h.read().groups_page(filter, offset, limit);
    Ok(ok(&page))
}

fn parse_gid(s: &str) -> Result<GroupId> {
    s.parse()
        .map_err(|_| ServiceError::NotFound(format!("group {s} not found")))
}

async fn get_group(State(store): State<AppState>, Path((id, gid)): Path<(String, String)>) -> Result<Response> {
    let gid = parse_gid(&gid)?;
    let h = store.get(&id)?;
    let p = h.read();
    Ok(ok(p.group(gid)?))
}

async fn snippets(
    State(store): State<AppState>,
    Path((id, gid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response> {
    let gid = parse_gid(&gid)?;
    let max_n = query_usize(&q, "max_n", DEFAULT_SNIPPETS)?;
    let h = store.get(&id)?;
    let list = h.read().snippets(gid, max_n)?;
    Ok(ok(&list))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpandRequest {
    pub category: String,
    pub seed_ids: Vec<GroupId>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_pool_size() -> usize {
    DEFAULT_POOL_SIZE
}

async fn expand(State(store): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response> {
    let req: ExpandRequest = parse_body(&body)?;
    let report = blocking(move || {
        let h = store.get(&id)?;
        let params = ExpandParams {
            k: req.k,
            pool_size: req.pool_size,
        };
        let report = h.write().expand(&req.category, &req.seed_ids, params);
        report
    })
    .await?;
    Ok(ok(&report))
}

async fn get_session(State(store): State<AppState>, Path((id, sid)): Path<(String, String)>) -> Result<Response> {
    let h = store.get(&id)?;
    let report = h.read().report(&sid)?;
    Ok(ok(&report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateRequest {
    pub group_id: GroupId,
    pub completed: bool,
}

async fn validate(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response> {
    let req: ValidateRequest = parse_body(&body)?;
    let report = blocking(move || {
        let h = store.get(&id)?;
        let report = h.write().validate(&sid, req.group_id, req.completed);
        report
    })
    .await?;
    Ok(ok(&report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReexpandRequest {
    pub accepted_ids: Vec<GroupId>,
}

async fn reexpand(
    State(store): State<AppState>,
    Path((id, sid)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response> {
    let req: ReexpandRequest = parse_body(&body)?;
    let report = blocking(move || {
        let h = store.get(&id)?;
        let report = h.write().reexpand(&sid, &req.accepted_ids);
        report
    })
    .await?;
    Ok(ok(&report))
}

async fn save(State(store): State<AppState>, Path((id, sid)): Path<(String, String)>) -> Result<Response> {
    let saved = blocking(move || {
        let h = store.get(&id)?;
        let saved = h.write().save(&sid);
        saved
    })
    .await?;
    Ok(ok(&saved))
}

async fn export(State(store): State<AppState>, Path((id, category)): Path<(String, String)>) -> Result<Response> {
    let h = store.get(&id)?;
    let csv = h.read().export(&category)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_errors_name_the_field() {
        let e = parse_body::<ExpandRequest>(br#"{"category":"x","seed_ids":[1,"a"]}"#).unwrap_err();
        assert_eq!(e.field(), Some("seed_ids[1]"));
        assert_eq!(e.status(), StatusCode::BAD_REQUEST);
        let e = parse_body::<ExpandRequest>(b"{").unwrap_err();
        assert_eq!(e.field(), None);
    }

    #[test]
    fn expand_defaults() {
        let r: ExpandRequest = parse_body(br#"{"category":"x","seed_ids":[1]}"#).unwrap();
        assert_eq!((r.k, r.pool_size), (DEFAULT_K, DEFAULT_POOL_SIZE));
    }

    #[test]
    fn format_from_headers() {
        let mut h = HeaderMap::new();
        assert_eq!(corpus_format(&h).unwrap(), CorpusFormat::Text);
        h.insert(header::CONTENT_TYPE, "text/x-conllu".parse().unwrap());
        assert_eq!(corpus_format(&h).unwrap(), CorpusFormat::Conllu);
        h.insert("x-corpus-format", "text".parse().unwrap());
        assert_eq!(corpus_format(&h).unwrap(), CorpusFormat::Text);
        h.insert("x-corpus-format", "pdf".parse().unwrap());
        assert!(corpus_format(&h).is_err());
    }
}
