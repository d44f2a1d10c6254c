use std::convert::Infallible;
use std::io::Cursor;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use vdcook_core::annotation::AnnotatorDescriptor;
use vdcook_core::ingestion::{FetchedItem, SourceDescriptor};
use vdcook_core::model::canonical;
use vdcook_core::stats::{render_summary_table, Sampling};
use vdcook_core::{ClipId, CookRequest, Timestamp};

use crate::error::ApiError;
use crate::{AppState, CanonicalJson};

type ApiResult<T = Response> = Result<T, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sources", post(register_source).get(list_sources))
        .route("/api/ingest/{source_id}", post(ingest))
        .route("/api/annotators", post(register_annotator).get(list_annotators))
        .route("/api/jobs", post(submit_job).get(list_jobs))
        .route("/api/jobs/{id}", get(job_state))
        .route("/api/jobs/{id}/events", get(job_events))
        .route("/api/jobs/{id}/manifest", get(job_manifest))
        .route("/api/clips/{id}", get(clip))
        .route("/api/clips/{id}/preview.png", get(preview))
        .route("/api/stats/summary", get(summary))
        .route("/api/stats/histogram", get(histogram))
        .route("/api/coverage", get(coverage))
        .route("/api/amplify", post(amplify))
        .with_state(state)
}

fn ok<T: serde::Serialize>(value: T) -> Response {
    CanonicalJson(StatusCode::OK, value).into_response()
}

/// Parses a JSON body, reporting problems as field errors on `body`.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let text = if body.is_empty() { "{}".as_bytes() } else { body.as_ref() };
    serde_json::from_slice(text).map_err(|e| ApiError::field("body", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

fn parse_clip_id(raw: &str) -> ApiResult<ClipId> {
    raw.parse().map_err(|e: String| ApiError::NotFound(e))
}

async fn register_source(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let descriptor: SourceDescriptor = parse_body(&body)?;
    let id = blocking(move || Ok(s.engine.ingestor().register_source(descriptor)?)).await?;
    Ok(CanonicalJson(StatusCode::CREATED, json!({ "source_id": id })).into_response())
}

async fn list_sources(State(s): State<AppState>) -> Response {
    ok(s.engine.ingestor().sources())
}

#[derive(Deserialize)]
struct UploadItem {
    /// Base64 container bytes.
    container_bytes: String,
    locator: String,
    #[serde(default = "unknown_license")]
    license: String,
}

fn unknown_license() -> String {
    "unknown".to_owned()
}

#[derive(Deserialize, Default)]
struct IngestBody {
    #[serde(default)]
    items: Option<Vec<UploadItem>>,
    #[serde(default)]
    since: Option<Timestamp>,
}

/// Crawls the source (or accepts uploaded items), then enriches and
/// indexes everything pending.
async fn ingest(State(s): State<AppState>, Path(source_id): Path<String>, body: Bytes) -> ApiResult {
    let body: IngestBody = parse_body(&body)?;
    let items = match body.items {
        Some(items) => Some(
            items
                .into_iter()
                .enumerate()
                .map(|(i, item)| {
                    let container_bytes = B64
                        .decode(item.container_bytes.as_bytes())
                        .map_err(|e| ApiError::field(&format!("items[{i}].container_bytes"), e.to_string()))?;
                    Ok(FetchedItem { container_bytes, locator: item.locator, license: item.license })
                })
                .collect::<ApiResult<Vec<_>>>()?,
        ),
        None => None,
    };
    let out = blocking(move || {
        let ingestor = s.engine.ingestor();
        let results = match items {
            Some(items) => ingestor.ingest_batch(&source_id, items, None)?,
            None => ingestor.crawl(&source_id, body.since)?,
        };
        let (enrich, indexed) = s.engine.process_pending()?;
        Ok(json!({ "results": results, "enrich": enrich, "indexed": indexed }))
    })
    .await?;
    Ok(ok(out))
}

async fn register_annotator(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let descriptor: AnnotatorDescriptor = parse_body(&body)?;
    let id = blocking(move || Ok(s.engine.register_annotator(descriptor)?)).await?;
    Ok(CanonicalJson(StatusCode::CREATED, json!({ "annotator_id": id })).into_response())
}

async fn list_annotators(State(s): State<AppState>) -> Response {
    let mut all = s.engine.annotators();
    all.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
    ok(all)
}

#[derive(Deserialize, Default)]
struct JobQuery {
    #[serde(default)]
    dry_run: bool,
}

async fn submit_job(State(s): State<AppState>, Query(q): Query<JobQuery>, body: Bytes) -> ApiResult {
    let request: CookRequest = parse_body(&body)?;
    let state = s.jobs.submit(request, q.dry_run)?;
    Ok(CanonicalJson(StatusCode::ACCEPTED, json!({ "job_id": state.job_id })).into_response())
}

async fn list_jobs(State(s): State<AppState>) -> Response {
    ok(s.jobs.list())
}

async fn job_state(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(ok(s.jobs.state(&id)?))
}

async fn job_events(
    State(s): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let subscription = s.jobs.subscribe(&id)?;
    let stream = futures::stream::unfold(subscription, |mut sub| async move {
        let state = sub.next().await?;
        let event = Event::default().event("state").data(canonical::to_string(&state));
        Some((Ok(event), sub))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

async fn job_manifest(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let text = s.jobs.manifest(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn clip(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let clip_id = parse_clip_id(&id)?;
    let (stored, metadata) = s.engine.clip(&clip_id).ok_or_else(|| ApiError::NotFound(format!("unknown clip {id}")))?;
    let annotations = s.engine.store().annotations(&clip_id)?;
    Ok(ok(json!({
        "record": stored.record,
        "provenance": stored.provenance,
        "metadata": metadata,
        "annotations": annotations,
    })))
}

#[derive(Deserialize, Default)]
struct PreviewQuery {
    /// `0` (default), `mid`, or a frame number.
    #[serde(default)]
    frame: Option<String>,
}

async fn preview(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<PreviewQuery>) -> ApiResult {
    let clip_id = parse_clip_id(&id)?;
    if !s.engine.store().contains(&clip_id) {
        return Err(ApiError::NotFound(format!("unknown clip {id}")));
    }
    let png = blocking(move || {
        let frame = match q.frame.as_deref() {
            None => 0,
            Some("mid") => s.engine.store().record(&clip_id).map(|r| r.frame_count as usize / 2).unwrap_or(0),
            Some(n) => n.parse().map_err(|_| ApiError::field("frame", "expected `mid` or a frame number"))?,
        };
        let (width, height, rgb) = s.engine.frame(&clip_id, frame)?;
        let image = image::RgbImage::from_raw(width, height, rgb)
            .ok_or_else(|| ApiError::Internal("frame size mismatch".into()))?;
        let mut png = Vec::new();
        image
            .write_to(&mut Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(png)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

#[derive(Deserialize, Default)]
struct SummaryQuery {
    #[serde(default)]
    mode: Option<String>,
    #[serde(default)]
    n: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    /// `json` (default) or `text` for the aligned table.
    #[serde(default)]
    format: Option<String>,
}

async fn summary(State(s): State<AppState>, Query(q): Query<SummaryQuery>) -> ApiResult {
    let sampling = match q.mode.as_deref() {
        None | Some("full") => Sampling::Full,
        Some("random_n") => Sampling::RandomN {
            n: q.n.ok_or_else(|| ApiError::field("n", "required for random_n"))?,
            seed: q.seed.unwrap_or(0),
        },
        Some(other) => return Err(ApiError::field("mode", format!("unknown sampling mode `{other}`"))),
    };
    let text = q.format.as_deref() == Some("text");
    let summary = blocking(move || Ok(s.engine.summary(sampling)?)).await?;
    Ok(if text {
        ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], render_summary_table(&summary)).into_response()
    } else {
        ok(summary)
    })
}

#[derive(Deserialize)]
struct HistogramQuery {
    field: String,
    /// Comma-separated ascending bin edges.
    edges: String,
}

async fn histogram(State(s): State<AppState>, Query(q): Query<HistogramQuery>) -> ApiResult {
    let edges = parse_list(&q.edges, "edges")?;
    let field = q.field.clone();
    let h = blocking(move || Ok(s.engine.histogram(&q.field, &edges)?)).await?;
    Ok(ok(json!({ "field": field, "histogram": h })))
}

fn parse_list(raw: &str, field: &str) -> ApiResult<Vec<f64>> {
    raw.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<f64>().map_err(|_| ApiError::field(field, format!("`{p}` is not a number"))))
        .collect()
}

#[derive(Deserialize)]
struct CoverageQuery {
    floor: u64,
    /// Comma-separated tag universe; all indexed tags when absent.
    #[serde(default)]
    tags: Option<String>,
}

fn tag_list(raw: Option<&str>) -> Vec<String> {
    raw.map(|t| t.split(',').map(str::trim).filter(|t| !t.is_empty()).map(str::to_owned).collect()).unwrap_or_default()
}

async fn coverage(State(s): State<AppState>, Query(q): Query<CoverageQuery>) -> ApiResult {
    let tags = tag_list(q.tags.as_deref());
    Ok(ok(s.engine.coverage(&tags, q.floor)?))
}

#[derive(Deserialize)]
struct AmplifyBody {
    floor: u64,
    #[serde(default = "default_batch")]
    per_tag_batch: u64,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    seed: u64,
}

fn default_batch() -> u64 {
    10
}

async fn amplify(State(s): State<AppState>, body: Bytes) -> ApiResult {
    let body: AmplifyBody = parse_body(&body)?;
    let result = blocking(move || Ok(s.engine.amplify(&body.tags, body.floor, body.per_tag_batch, body.seed)?)).await?;
    Ok(ok(result))
}
