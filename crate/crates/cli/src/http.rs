//! JSON HTTP API. Every response is canonical JSON in an envelope.
//! Reads share the store; writes take it exclusively.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use xv_core::analytics::bulletin::build_bulletin;
use xv_core::analytics::TagSource;
use xv_core::curate::{apply_user_tag, create_experiment, review, tag_history, ExperimentSpec, ReviewRequest};
use xv_core::metamodel::encode_value;
use xv_core::orchestrate::{replay, run_pipeline, RunOptions};
use xv_core::service::{
    experiment_histogram, ingest, lineage, query, resolve_dataset, scope_agreement, IngestRequest,
};
use xv_core::{Error, Id, Result, Store};

use crate::export::{export, ExportRequest};
use crate::render::{error_envelope, ok_envelope, value, Page};

pub type Shared = Arc<RwLock<Store>>;

pub fn status_of(e: &Error) -> StatusCode {
    match e.code() {
        "NOT_FOUND" | "UNKNOWN_NODE" | "UNKNOWN_TARGET" | "UNKNOWN_BLOB" => StatusCode::NOT_FOUND,
        "SENIOR_REQUIRED" | "NOT_TEAM_MEMBER" => StatusCode::FORBIDDEN,
        "CONFLICT" | "LOCKED" => StatusCode::CONFLICT,
        "IO_ERROR" | "MISSING_BLOB" | "CORRUPTION_MID_LEDGER" | "READ_ONLY" => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

fn respond(status: StatusCode, body: &Value) -> Response {
    let bytes = encode_value(body).unwrap_or_else(|_| br#"{"status":"error"}"#.to_vec());
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn reply(result: Result<Value>) -> Response {
    match result {
        Ok(data) => respond(StatusCode::OK, &ok_envelope(data)),
        Err(e) => respond(status_of(&e), &error_envelope(&e)),
    }
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::InvalidArgument(format!("request body: {e}")))
}

fn params<T: DeserializeOwned>(uri: &Uri) -> Result<T> {
    Query::<T>::try_from_uri(uri)
        .map(|Query(q)| q)
        .map_err(|e| Error::InvalidArgument(e.body_text()))
}

fn read<T>(state: &Shared, f: impl FnOnce(&Store) -> Result<T>) -> Result<T> {
    let store = state.read().map_err(|_| Error::InvalidArgument("store lock poisoned".into()))?;
    f(&store)
}

fn write<T>(state: &Shared, f: impl FnOnce(&mut Store) -> Result<T>) -> Result<T> {
    let mut store = state.write().map_err(|_| Error::InvalidArgument("store lock poisoned".into()))?;
    f(&mut store)
}

#[derive(Debug, Default, Deserialize)]
struct Paging {
    offset: Option<usize>,
    limit: Option<usize>,
}

impl Paging {
    fn page(&self) -> Page {
        Page::new(self.offset, self.limit)
    }
}

async fn list_experiments(State(s): State<Shared>, uri: Uri) -> Response {
    reply(params::<Paging>(&uri).and_then(|p| read(&s, |store| {
        let all: Vec<_> = store.index().experiments().cloned().collect();
        p.page().wrap(&all)
    })))
}

async fn post_experiment(State(s): State<Shared>, raw: Bytes) -> Response {
    reply(body::<ExperimentSpec>(&raw).and_then(|spec| {
        write(&s, |store| {
            let (e, warnings) = create_experiment(store, spec)?;
            Ok(json!({"experiment": value(&e)?, "warnings": warnings}))
        })
    }))
}

async fn dataset_releases(State(s): State<Shared>, Path(id): Path<String>, uri: Uri) -> Response {
    reply(params::<Paging>(&uri).and_then(|p| read(&s, |store| {
        let d = resolve_dataset(store, &id)?;
        let all: Vec<_> = store.index().releases_of(&d.id).into_iter().cloned().collect();
        p.page().wrap(&all)
    })))
}

#[derive(Debug, Deserialize)]
struct SourceBody {
    uri: String,
    content: String,
}

#[derive(Debug, Deserialize)]
struct IngestBody {
    #[serde(flatten)]
    request: IngestRequest,
    sources: Vec<SourceBody>,
}

async fn post_ingest(State(s): State<Shared>, raw: Bytes) -> Response {
    reply(body::<IngestBody>(&raw).and_then(|b| {
        let sources: Vec<_> = b.sources.into_iter().map(|src| (src.uri, src.content.into_bytes())).collect();
        write(&s, |store| value(&ingest(store, &b.request, &sources)?))
    }))
}

#[derive(Debug, Deserialize)]
struct RunBody {
    experiment: Id,
    #[serde(default)]
    inputs: BTreeMap<String, String>,
    #[serde(default)]
    seed_base: Option<String>,
}

async fn run(State(s): State<Shared>, Path(id): Path<String>, raw: Bytes) -> Response {
    reply(body::<RunBody>(&raw).and_then(|b| {
        let inputs = b.inputs.into_iter().map(|(k, v)| (k, v.into_bytes())).collect();
        let opts = RunOptions { seed_base: b.seed_base };
        write(&s, |store| value(&run_pipeline(store, &Id::new(id), &b.experiment, &inputs, &opts)?))
    }))
}

async fn get_run(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    reply(read(&s, |store| {
        let r = store.index().run(&Id::new(id.as_str())).ok_or_else(|| Error::not_found("run", &id))?;
        value(r)
    }))
}

async fn post_replay(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    reply(read(&s, |store| value(&replay(store, &Id::new(id))?)))
}

#[derive(Debug, Deserialize)]
struct ItemsQuery {
    #[serde(default)]
    filter: String,
    scope: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn items(State(s): State<Shared>, uri: Uri) -> Response {
    reply(params::<ItemsQuery>(&uri).and_then(|q| read(&s, |store| {
        let result = query(store, q.scope.as_deref().map(Id::new).as_ref(), &q.filter)?;
        let page = Page::new(q.offset, q.limit);
        Ok(json!({
            "scope": result.scope,
            "columns": result.columns,
            "total": result.rows.len(),
            "offset": page.offset,
            "limit": page.limit,
            "items": value(&page.slice(&result.rows))?,
        }))
    })))
}

#[derive(Debug, Deserialize)]
struct TagBody {
    target: Id,
    label: String,
    member: Id,
    experiment: Id,
}

async fn post_tag(State(s): State<Shared>, raw: Bytes) -> Response {
    reply(body::<TagBody>(&raw).and_then(|b| {
        write(&s, |store| value(&apply_user_tag(store, &b.target, &b.label, &b.member, &b.experiment)?))
    }))
}

async fn post_validation(State(s): State<Shared>, raw: Bytes) -> Response {
    reply(body::<ReviewRequest>(&raw).and_then(|req| write(&s, |store| value(&review(store, req)?))))
}

async fn history(State(s): State<Shared>, Path(target): Path<String>, uri: Uri) -> Response {
    reply(params::<Paging>(&uri).and_then(|p| read(&s, |store| p.page().wrap(&tag_history(store, &Id::new(target))?))))
}

async fn get_lineage(State(s): State<Shared>, Path(id): Path<String>) -> Response {
    reply(read(&s, |store| value(&lineage(store, &Id::new(id))?)))
}

#[derive(Debug, Deserialize)]
struct AgreementQuery {
    a: String,
    b: String,
    scope: Option<String>,
}

async fn agreement(State(s): State<Shared>, uri: Uri) -> Response {
    reply(params::<AgreementQuery>(&uri).and_then(|q| read(&s, |store| {
        let scope = q.scope.as_deref().map(Id::new);
        value(&scope_agreement(store, scope.as_ref(), &TagSource::parse(&q.a), &TagSource::parse(&q.b))?)
    })))
}

#[derive(Debug, Deserialize)]
struct HistogramQuery {
    experiment: String,
}

async fn histogram(State(s): State<Shared>, uri: Uri) -> Response {
    reply(params::<HistogramQuery>(&uri).and_then(|q| read(&s, |store| value(&experiment_histogram(store, &Id::new(q.experiment))?))))
}

async fn bulletin(State(s): State<Shared>, Path(exp): Path<String>) -> Response {
    reply(read(&s, |store| value(&build_bulletin(store, &Id::new(exp))?)))
}

async fn get_export(State(s): State<Shared>, uri: Uri) -> Response {
    reply(params::<ExportRequest>(&uri).and_then(|q| read(&s, |store| {
        let bytes = export(store, &q)?;
        let content = String::from_utf8(bytes).map_err(|_| Error::InvalidArgument("export is not UTF-8".into()))?;
        Ok(json!({"format": q.format, "what": q.what, "content": content}))
    })))
}

async fn fallback() -> Response {
    reply(Err(Error::not_found("route", "")))
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/experiments", get(list_experiments).post(post_experiment))
        .route("/datasets/{id}/releases", get(dataset_releases))
        .route("/ingest", post(post_ingest))
        .route("/pipelines/{id}/run", post(run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/replay", post(post_replay))
        .route("/items", get(items))
        .route("/tags", post(post_tag))
        .route("/validations", post(post_validation))
        .route("/tags/{target}/history", get(history))
        .route("/lineage/{id}", get(get_lineage))
        .route("/analytics/agreement", get(agreement))
        .route("/analytics/confidence-histogram", get(histogram))
        .route("/bulletins/{experiment}", get(bulletin))
        .route("/export", get(get_export))
        .fallback(fallback)
        .with_state(store)
}

/// Binds and serves until the process ends.
pub fn serve_blocking(store: Store, bind: &str) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind).await.map_err(|e| Error::io(bind, e))?;
        eprintln!("xv listening on {}", listener.local_addr().map_err(|e| Error::io(bind, e))?);
        axum::serve(listener, router(Arc::new(RwLock::new(store))))
            .await
            .map_err(|e| Error::io(bind, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::not_found("run", "r")), StatusCode::NOT_FOUND);
        assert_eq!(status_of(&Error::InvalidArgument("x".into())), StatusCode::BAD_REQUEST);
    }
}
