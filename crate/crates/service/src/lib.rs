//! HTTP review service. Every route is a thin adapter over one [`Engine`] or
//! [`scenariokit::Store`] call; engine work runs on the blocking pool.
//!
//! Reviewer identity comes from the `X-Reviewer` header. Put an authentication
//! layer in front of [`router`] that verifies the caller and sets that header.

mod error;

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use scenariokit::pipeline::ExpandRequest;
use scenariokit::rubric::HumanInput;
use scenariokit::schema::{ReviewDecision, StagePayload, Verdict};
use scenariokit::store::export::ExportFormat;
use scenariokit::{Engine, Scenario, Stage, UseCaseWorksheet};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

pub use error::{status_for, ApiError, ErrorBody};

pub const OPENAPI: &str = include_str!("../openapi.yaml");

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct Replay {
    request: Bytes,
    status: StatusCode,
    etag: Option<HeaderValue>,
    body: Bytes,
}

impl Replay {
    fn response(&self) -> Response {
        let mut r = (self.status, [(header::CONTENT_TYPE, "application/json")], self.body.clone()).into_response();
        if let Some(tag) = &self.etag {
            r.headers_mut().insert(header::ETAG, tag.clone());
        }
        r
    }
}

#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    // Held for the whole keyed request so a concurrent replay waits for the original.
    replays: Arc<Mutex<HashMap<String, Replay>>>,
}

pub fn router(engine: Arc<Engine>) -> Router {
    let state = AppState { engine, replays: Arc::default() };
    Router::new()
        .route("/api/openapi.yaml", get(|| async { ([(header::CONTENT_TYPE, "application/yaml")], OPENAPI) }))
        .route("/api/use-cases", get(list_use_cases).post(create_use_case))
        .route("/api/use-cases/{id}", get(get_use_case))
        .route("/api/use-cases/{id}/status", get(use_case_status))
        .route("/api/use-cases/{id}/expand", post(expand_use_case))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/reviews/pending", get(pending))
        .route("/api/scenarios", get(list_scenarios))
        .route("/api/scenarios/{id}", get(get_scenario))
        .route("/api/scenarios/{id}/expand", post(expand_scenario))
        .route("/api/scenarios/{id}/diff", get(diff))
        .route("/api/scenarios/{id}/reviews", post(review))
        .route("/api/scenarios/{id}/rubric", get(list_assessments).post(assess))
        .route("/api/rubric", get(rubric))
        .route("/api/taxonomy", get(taxonomy))
        .route("/api/coverage", get(coverage))
        .route("/api/export/summary", get(export_summary))
        .route("/api/export/full/{id}", get(export_full))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route") })
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(engine)).await
}

async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Engine) -> ApiResult<T> + Send + 'static,
{
    let engine = state.engine.clone();
    tokio::task::spawn_blocking(move || f(&engine))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn etag(revision: u64) -> HeaderValue {
    HeaderValue::from_str(&format!("\"{revision}\"")).expect("digits and quotes")
}

fn with_etag<T: Serialize>(status: StatusCode, revision: u64, value: &T) -> Response {
    (status, [(header::ETAG, etag(revision))], Json(value)).into_response()
}

fn if_match(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(v) = headers.get(header::IF_MATCH) else { return Ok(None) };
    let text = v.to_str().unwrap_or_default().trim();
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse().map(Some).map_err(|_| ApiError::bad_request(format!("If-Match must be a revision ETag, got {text:?}")))
}

fn reviewer(headers: &HeaderMap) -> String {
    headers
        .get("x-reviewer")
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .unwrap_or("anonymous")
        .to_string()
}

fn parse_stage(text: &str) -> ApiResult<Stage> {
    text.parse().map_err(ApiError::bad_request)
}

fn non_empty(v: &Option<String>) -> Option<&str> {
    v.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

// ---- use cases ------------------------------------------------------------------

async fn list_use_cases(State(st): State<AppState>) -> ApiResult<Json<Vec<UseCaseWorksheet>>> {
    blocking(&st, |e| Ok(Json(e.store().all::<UseCaseWorksheet>()?))).await
}

async fn create_use_case(State(st): State<AppState>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let w: UseCaseWorksheet = body(&bytes)?;
    let actor = reviewer(&headers);
    blocking(&st, move |e| {
        let rev = e.add_use_case(&w, &actor)?;
        Ok(with_etag(StatusCode::CREATED, rev, &w))
    })
    .await
}

async fn get_use_case(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| {
        let v = e.use_case(&id)?;
        Ok(with_etag(StatusCode::OK, v.revision, &v.doc))
    })
    .await
}

async fn use_case_status(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| Ok(Json(e.pipeline_status(&id)?).into_response())).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpandBody {
    stage: Stage,
    #[serde(default)]
    count: Option<u32>,
    backend_id: String,
}

async fn start_job(st: &AppState, req: ExpandRequest) -> ApiResult<Response> {
    let job = blocking(st, move |e| Ok(e.plan_expansion(&req)?)).await?;
    let engine = st.engine.clone();
    let id = job.id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(err) = engine.run_job(&id) {
            tracing::warn!(job = %id, %err, "expansion job failed");
        }
    });
    let location = HeaderValue::from_str(&format!("/api/jobs/{}", job.id)).expect("job ids are ascii");
    Ok((StatusCode::ACCEPTED, [(header::LOCATION, location)], Json(job)).into_response())
}

async fn expand_use_case(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let b: ExpandBody = body(&bytes)?;
    let req = ExpandRequest {
        stage: b.stage,
        use_case_id: Some(id.into()),
        scenario_id: None,
        target_count: b.count,
        backend_id: b.backend_id,
        actor: reviewer(&headers),
    };
    start_job(&st, req).await
}

async fn expand_scenario(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let b: ExpandBody = body(&bytes)?;
    let req = ExpandRequest {
        stage: b.stage,
        use_case_id: None,
        scenario_id: Some(id.into()),
        target_count: b.count,
        backend_id: b.backend_id,
        actor: reviewer(&headers),
    };
    start_job(&st, req).await
}

async fn list_jobs(State(st): State<AppState>) -> ApiResult<Response> {
    blocking(&st, |e| Ok(Json(e.jobs()?).into_response())).await
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| Ok(Json(e.job(&id)?).into_response())).await
}

// ---- scenarios and reviews -------------------------------------------------------

#[derive(Deserialize)]
struct Filter {
    stage: Option<String>,
    use_case: Option<String>,
}

async fn pending(State(st): State<AppState>, Query(q): Query<Filter>) -> ApiResult<Response> {
    let stage = non_empty(&q.stage).map(parse_stage).transpose()?;
    let uc = non_empty(&q.use_case).map(String::from);
    blocking(&st, move |e| Ok(Json(e.pending_reviews(uc.as_deref(), stage)?).into_response())).await
}

async fn list_scenarios(State(st): State<AppState>, Query(q): Query<Filter>) -> ApiResult<Response> {
    let uc = non_empty(&q.use_case).map(String::from);
    blocking(&st, move |e| {
        let list: Vec<Scenario> = match uc {
            Some(uc) => {
                e.use_case(&uc)?;
                e.store().scenarios_for(&uc)?
            }
            None => e.store().all()?,
        };
        Ok(Json(list).into_response())
    })
    .await
}

async fn get_scenario(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| {
        let v = e.scenario(&id)?;
        Ok(with_etag(StatusCode::OK, v.revision, &v.doc))
    })
    .await
}

#[derive(Deserialize)]
struct DiffQuery {
    from: u64,
    to: u64,
}

async fn diff(
    State(st): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<DiffQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q.map_err(|e| ApiError::bad_request(format!("from and to revision indexes are required: {e}")))?;
    blocking(&st, move |e| Ok(Json(e.diff(&id, q.from, q.to)?).into_response())).await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReviewBody {
    stage: Stage,
    verdict: Verdict,
    #[serde(default)]
    comments: String,
    #[serde(default)]
    edited_payload: Option<StagePayload>,
}

async fn review(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> Response {
    let key = headers
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(|k| format!("review:{id}:{k}"));
    let Some(key) = key else {
        return run_review(&st, id, &headers, &bytes).await.response();
    };
    let mut replays = st.replays.lock().await;
    if let Some(r) = replays.get(&key) {
        if r.request != bytes {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_mismatch",
                "this Idempotency-Key was used with a different request body",
            )
            .into_response();
        }
        return r.response();
    }
    let replay = run_review(&st, id, &headers, &bytes).await;
    let response = replay.response();
    replays.insert(key, replay);
    response
}

async fn run_review(st: &AppState, id: String, headers: &HeaderMap, bytes: &Bytes) -> Replay {
    let outcome: ApiResult<(u64, Scenario)> = async {
        let b: ReviewBody = body(bytes)?;
        let expected = if_match(headers)?;
        let reviewer = reviewer(headers);
        blocking(st, move |e| {
            let decision = ReviewDecision {
                reviewer,
                scenario_id: id.clone().into(),
                stage: b.stage,
                verdict: b.verdict,
                comments: b.comments,
                edited_payload: b.edited_payload,
                timestamp: e.now(),
            };
            let s = e.submit_review(&decision, expected)?;
            Ok((e.scenario(&id)?.revision, s))
        })
        .await
    }
    .await;
    match outcome {
        Ok((rev, s)) => Replay {
            request: bytes.clone(),
            status: StatusCode::OK,
            etag: Some(etag(rev)),
            body: serde_json::to_vec(&s).expect("plain data").into(),
        },
        Err(err) => Replay {
            request: bytes.clone(),
            status: err.status,
            etag: None,
            body: serde_json::to_vec(&err.body).expect("plain data").into(),
        },
    }
}

// ---- rubric, coverage, export ---------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RubricBody {
    #[serde(default)]
    scores: BTreeMap<String, u32>,
    #[serde(default)]
    notes: BTreeMap<String, String>,
}

async fn assess(State(st): State<AppState>, Path(id): Path<String>, headers: HeaderMap, bytes: Bytes) -> ApiResult<Response> {
    let b: RubricBody = body(&bytes)?;
    let mut input: BTreeMap<String, HumanInput> = BTreeMap::new();
    for (cat, score) in b.scores {
        input.entry(cat).or_default().score = Some(score);
    }
    for (cat, notes) in b.notes {
        input.entry(cat).or_default().notes = notes;
    }
    let by = reviewer(&headers);
    blocking(&st, move |e| Ok((StatusCode::CREATED, Json(e.record_assessment(&id, &input, &by)?)).into_response())).await
}

async fn list_assessments(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| {
        e.scenario(&id)?;
        Ok(Json(e.store().assessments_for(&id)?).into_response())
    })
    .await
}

async fn rubric(State(st): State<AppState>) -> ApiResult<Response> {
    blocking(&st, |e| Ok(Json(e.store().rubric()?).into_response())).await
}

async fn taxonomy(State(st): State<AppState>) -> ApiResult<Response> {
    blocking(&st, |e| Ok(Json(e.store().taxonomy()?).into_response())).await
}

#[derive(Deserialize)]
struct CoverageQuery {
    use_case: Option<String>,
    #[serde(default)]
    floor: usize,
}

async fn coverage(State(st): State<AppState>, Query(q): Query<CoverageQuery>) -> ApiResult<Response> {
    blocking(&st, move |e| {
        let uc = non_empty(&q.use_case);
        if let Some(uc) = uc {
            e.use_case(uc)?;
        }
        Ok(Json(e.coverage(uc, q.floor)?).into_response())
    })
    .await
}

#[derive(Deserialize)]
struct ExportQuery {
    format: Option<String>,
    use_case: Option<String>,
    #[serde(default)]
    include_rejected: bool,
}

async fn export_summary(State(st): State<AppState>, Query(q): Query<ExportQuery>) -> ApiResult<Response> {
    let format: ExportFormat = non_empty(&q.format).unwrap_or("csv").parse().map_err(ApiError::bad_request)?;
    let content_type = match format {
        ExportFormat::Csv => "text/csv; charset=utf-8",
        ExportFormat::Markdown => "text/markdown; charset=utf-8",
    };
    blocking(&st, move |e| {
        let ids: Vec<String> = match non_empty(&q.use_case) {
            Some(uc) => {
                e.use_case(uc)?;
                e.store().list_scenarios(uc)?
            }
            None => e.store().ids(scenariokit::store::Kind::Scenario)?,
        };
        let bytes = e.store().export_summary(&ids, format, q.include_rejected)?;
        Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
    })
    .await
}

async fn export_full(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    blocking(&st, move |e| {
        let bytes = e.store().export_full(&id)?;
        Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], bytes).into_response())
    })
    .await
}
