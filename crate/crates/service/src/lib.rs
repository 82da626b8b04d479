//! HTTP API over a clipseek catalog: video registration, clip and sketch
//! search, record listings and keyframe images.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use clipseek::catalog::{Catalog, VideoRecord};
use clipseek::keyframe::ingest_frames;
use clipseek::motion::{motion_rank, Trajectory};
use clipseek::pipeline::PipelineConfig;
use clipseek::retrieval::{search_by_clip, SearchConfig};
use clipseek::{KeyframeId, VideoId};

mod archive;
pub mod error;

pub use archive::unpack_frames;
pub use error::{ApiError, ErrorCode};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
pub const DEFAULT_MAX_FRAMES: usize = 2000;
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 1 << 30;
const UPLOAD_DIR: &str = "uploads";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub catalog_root: PathBuf,
    /// `*` allows any origin.
    pub cors_origin: Option<String>,
    pub max_frames: usize,
    pub max_upload_bytes: usize,
    pub pipeline: PipelineConfig,
    pub search: SearchConfig,
}

impl ServiceConfig {
    pub fn new(catalog_root: impl Into<PathBuf>) -> Self {
        Self {
            addr: DEFAULT_ADDR.parse().expect("valid default address"),
            catalog_root: catalog_root.into(),
            cors_origin: None,
            max_frames: DEFAULT_MAX_FRAMES,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            pipeline: PipelineConfig::default(),
            search: SearchConfig::default(),
        }
    }

    /// Overlay `CLIPSEEK_ADDR`, `CLIPSEEK_CATALOG` and `CLIPSEEK_CORS_ORIGIN`.
    pub fn with_env(mut self) -> Result<Self, String> {
        if let Ok(addr) = std::env::var("CLIPSEEK_ADDR") {
            self.addr = addr.parse().map_err(|e| format!("CLIPSEEK_ADDR `{addr}`: {e}"))?;
        }
        if let Ok(root) = std::env::var("CLIPSEEK_CATALOG") {
            self.catalog_root = root.into();
        }
        if let Ok(origin) = std::env::var("CLIPSEEK_CORS_ORIGIN") {
            self.cors_origin = Some(origin);
        }
        Ok(self)
    }
}

#[derive(Clone)]
pub struct AppState {
    pub catalog: Arc<Catalog>,
    pub config: Arc<ServiceConfig>,
}

pub fn router(state: AppState) -> Router {
    let body_limit = state.config.max_upload_bytes;
    let cors = state.config.cors_origin.as_deref().map(cors_layer);
    let app = Router::new()
        .route("/videos", post(register).get(list_videos))
        .route("/videos/{id}", get(get_video))
        .route("/keyframes/{id}/image", get(keyframe_image))
        .route("/search", post(search_clip))
        .route("/search/motion", post(search_motion))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state);
    match cors {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

fn cors_layer(origin: &str) -> CorsLayer {
    let allow = if origin == "*" {
        AllowOrigin::any()
    } else {
        match HeaderValue::from_str(origin) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => {
                log::warn!("ignoring unusable CORS origin `{origin}`");
                AllowOrigin::list([])
            }
        }
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

/// Open the catalog and serve until interrupted.
pub async fn serve(config: ServiceConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    let (catalog, report) = Catalog::open(&config.catalog_root)?;
    for q in &report.quarantined {
        log::warn!("journal line {} quarantined: {}", q.line, q.reason);
    }
    log::info!(
        "catalog {} loaded: {} videos, {} keyframes",
        config.catalog_root.display(),
        report.videos,
        report.keyframes
    );
    let addr = config.addr;
    let state = AppState {
        catalog: Arc::new(catalog),
        config: Arc::new(config),
    };
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

#[derive(Default)]
struct Upload {
    name: Option<String>,
    archive: Option<Bytes>,
    k: Option<String>,
    max_distance: Option<String>,
}

async fn read_upload(mut form: Multipart) -> Result<Upload, ApiError> {
    let mut up = Upload::default();
    let bad = |e: axum::extract::multipart::MultipartError| ApiError::bad_request(e.body_text());
    while let Some(field) = form.next_field().await.map_err(bad)? {
        match field.name().unwrap_or_default() {
            "name" => up.name = Some(field.text().await.map_err(bad)?),
            "archive" | "frames" => up.archive = Some(field.bytes().await.map_err(bad)?),
            "k" => up.k = Some(field.text().await.map_err(bad)?),
            "max_distance" => up.max_distance = Some(field.text().await.map_err(bad)?),
            _ => {}
        }
    }
    Ok(up)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RegisteredVideo {
    pub v_id: VideoId,
    pub name: String,
    pub keyframe_count: usize,
}

async fn register(State(state): State<AppState>, form: Multipart) -> Result<(StatusCode, Json<RegisteredVideo>), ApiError> {
    let up = read_upload(form).await?;
    let name = up.name.ok_or_else(|| ApiError::new(ErrorCode::EmptyName, "missing `name` field"))?;
    let archive = up.archive.ok_or_else(|| ApiError::new(ErrorCode::EmptyArchive, "missing `archive` field"))?;

    let video = blocking(move || {
        // validate before unpacking anything
        if name.is_empty() {
            return Err(clipseek::Error::EmptyName.into());
        }
        if name.chars().count() > clipseek::catalog::VIDEO_NAME_LIMIT {
            return Err(clipseek::Error::NameTooLong(name.chars().count()).into());
        }
        let uploads = state.catalog.root().join(UPLOAD_DIR);
        std::fs::create_dir_all(&uploads).map_err(ApiError::internal)?;
        // removed on drop unless registration succeeds
        let staging = tempfile::Builder::new()
            .prefix("upload-")
            .tempdir_in(&uploads)
            .map_err(ApiError::internal)?;
        unpack_frames(&archive, staging.path(), state.config.max_frames)?;
        let (frames, report) = ingest_frames(staging.path())?;
        for s in &report.skipped {
            log::warn!("upload `{name}`: skipped {} ({})", s.name, s.reason);
        }
        let video = state.catalog.register_video(&name, &frames, &state.config.pipeline)?;
        let _ = staging.keep();
        Ok(video)
    })
    .await?;

    Ok((
        StatusCode::CREATED,
        Json(RegisteredVideo {
            v_id: video.v_id,
            name: video.v_name,
            keyframe_count: video.keyframe_ids.len(),
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipHit {
    pub v_id: VideoId,
    pub v_name: String,
    pub distance: f64,
    pub thumbnail_url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Timings {
    pub retrieval_ms: f64,
    pub matching_ms: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClipSearchResponse {
    pub results: Vec<ClipHit>,
    pub timings: Timings,
}

pub fn thumbnail_url(i_id: KeyframeId) -> String {
    format!("/keyframes/{i_id}/image")
}

fn parse_field<T: std::str::FromStr>(name: &str, raw: Option<String>) -> Result<Option<T>, ApiError> {
    raw.map(|s| {
        s.trim()
            .parse()
            .map_err(|_| ApiError::bad_request(format!("`{name}` is not a valid value: `{s}`")))
    })
    .transpose()
}

async fn search_clip(State(state): State<AppState>, form: Multipart) -> Result<Json<ClipSearchResponse>, ApiError> {
    let up = read_upload(form).await?;
    let archive = up.archive.ok_or_else(|| ApiError::new(ErrorCode::EmptyArchive, "missing `archive` field"))?;
    let mut cfg = state.config.search;
    if let Some(k) = parse_field::<usize>("k", up.k)? {
        if k == 0 {
            return Err(ApiError::bad_request("`k` must be at least 1"));
        }
        cfg.k = k;
    }
    if let Some(d) = parse_field::<f64>("max_distance", up.max_distance)? {
        if d.is_nan() || d < 0.0 {
            return Err(ApiError::bad_request("`max_distance` must be non-negative"));
        }
        cfg.max_distance = Some(d);
    }

    let response = blocking(move || {
        let staging = tempfile::tempdir().map_err(ApiError::internal)?;
        unpack_frames(&archive, staging.path(), state.config.max_frames)?;
        let (frames, _) = ingest_frames(staging.path())?;
        let snapshot = state.catalog.snapshot();
        let outcome = search_by_clip(&snapshot, &frames, &cfg)?;
        let results = outcome
            .ranked
            .entries
            .iter()
            .map(|e| {
                Ok(ClipHit {
                    v_id: e.v_id,
                    v_name: snapshot.get_video(e.v_id)?.v_name.clone(),
                    distance: e.distance,
                    thumbnail_url: thumbnail_url(e.best_catalog_kf),
                })
            })
            .collect::<Result<Vec<_>, clipseek::Error>>()?;
        Ok(ClipSearchResponse {
            results,
            timings: Timings {
                retrieval_ms: outcome.timings.retrieval.as_secs_f64() * 1e3,
                matching_ms: outcome.timings.matching.as_secs_f64() * 1e3,
            },
        })
    })
    .await?;
    Ok(Json(response))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MotionHitBody {
    pub v_id: VideoId,
    pub v_name: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MotionSearchResponse {
    pub results: Vec<MotionHitBody>,
}

async fn search_motion(State(state): State<AppState>, body: Bytes) -> Result<Json<MotionSearchResponse>, ApiError> {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let sketch = Trajectory::from_sketch_json(text)?;
    let snapshot = state.catalog.snapshot();
    let hits = motion_rank(&sketch, snapshot.videos().map(|v| (v.v_id, v.trajectory.as_ref())))?;
    let results = hits
        .into_iter()
        .map(|h| {
            Ok(MotionHitBody {
                v_id: h.v_id,
                v_name: snapshot.get_video(h.v_id)?.v_name.clone(),
                score: h.score,
            })
        })
        .collect::<Result<Vec<_>, clipseek::Error>>()?;
    Ok(Json(MotionSearchResponse { results }))
}

#[derive(Debug, Deserialize)]
struct Page {
    limit: Option<usize>,
    offset: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VideoListing {
    pub videos: Vec<VideoRecord>,
    pub total: usize,
}

const DEFAULT_PAGE: usize = 50;
const MAX_PAGE: usize = 1000;

async fn list_videos(State(state): State<AppState>, page: Result<Query<Page>, axum::extract::rejection::QueryRejection>) -> Result<Json<VideoListing>, ApiError> {
    let Query(page) = page.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let limit = page.limit.unwrap_or(DEFAULT_PAGE).min(MAX_PAGE);
    let snapshot = state.catalog.snapshot();
    let videos = snapshot
        .videos()
        .skip(page.offset.unwrap_or(0))
        .take(limit)
        .cloned()
        .collect();
    Ok(Json(VideoListing {
        videos,
        total: snapshot.video_count(),
    }))
}

fn parse_id(raw: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::new(ErrorCode::NotFound, format!("no such id `{raw}`")))
}

async fn get_video(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<VideoRecord>, ApiError> {
    let id = parse_id(&id)?;
    Ok(Json(state.catalog.snapshot().get_video(id)?.clone()))
}

async fn keyframe_image(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let id = parse_id(&id)?;
    let record = state.catalog.snapshot().get_keyframe(id)?.clone();
    let bytes = tokio::fs::read(state.catalog.blob_path(&record))
        .await
        .map_err(ApiError::internal)?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response())
}
