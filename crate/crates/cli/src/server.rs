//! Single-session HTTP service backing the browser alignment tool.
//!
//! All state lives in memory. Reads run concurrently; every mutation takes
//! the session write lock, so edits apply one at a time in arrival order.

use std::io::Cursor;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use meshprior_core::colmap::SparseModel;
use meshprior_core::splat::{init_gaussians, render_preview, PreviewCamera};
use meshprior_core::{
    apply_similarity, estimate_similarity, merge_clouds, PointCloud, RegistrationError,
    SimilarityTransform, Vec3,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, RwLock};
use tower_http::services::ServeDir;

use crate::config::Outputs;
use crate::error::AppError;
use crate::pipeline::{finalize, Artifacts, Prepared};

/// Upper bound on points per display buffer.
pub const DISPLAY_LIMIT: usize = 200_000;
pub const DEFAULT_BIND: &str = "127.0.0.1:8765";
pub const BIND_ENV: &str = "MESHPRIOR_BIND";
/// Preview renders are downsized to at most this width by default.
pub const PREVIEW_MAX_WIDTH: u32 = 640;
const MIN_PAIRS: usize = 3;

/// Deterministic stride decimation to at most `limit` points.
pub fn decimate(cloud: &PointCloud, limit: usize) -> PointCloud {
    let stride = cloud.len().div_ceil(limit.max(1)).max(1);
    PointCloud {
        positions: cloud.positions.iter().step_by(stride).copied().collect(),
        colors: cloud.colors.iter().step_by(stride).copied().collect(),
        normals: cloud.normals.iter().step_by(stride).copied().collect(),
    }
}

/// `u32` count, then per point three `f32` coordinates and three `u8`
/// color channels, all little-endian.
pub fn encode_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 15 * cloud.len());
    out.extend((cloud.len() as u32).to_le_bytes());
    for (p, c) in cloud.positions.iter().zip(&cloud.colors) {
        for v in p {
            out.extend((*v as f32).to_le_bytes());
        }
        out.extend(c);
    }
    out
}

/// Inverse of [`encode_cloud`]; `None` on a malformed buffer.
pub fn decode_cloud(bytes: &[u8]) -> Option<Vec<([f32; 3], [u8; 3])>> {
    let n = u32::from_le_bytes(bytes.get(..4)?.try_into().ok()?) as usize;
    let body = &bytes[4..];
    if body.len() != n.checked_mul(15)? {
        return None;
    }
    Some(
        body.chunks_exact(15)
            .map(|r| {
                let f = |i: usize| f32::from_le_bytes(r[4 * i..4 * i + 4].try_into().unwrap());
                ([f(0), f(1), f(2)], [r[12], r[13], r[14]])
            })
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Point on the sampled cloud, mesh frame.
    pub sampled: Vec3,
    /// Point on the SfM cloud, world frame.
    pub sfm: Vec3,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "action", rename_all = "lowercase", deny_unknown_fields)]
enum CorrespondenceEdit {
    Add { sampled: Vec3, sfm: Vec3 },
    Remove { index: usize },
    Clear,
}

#[derive(Debug, Default)]
struct Session {
    transform: SimilarityTransform,
    correspondences: Vec<Correspondence>,
    last_merge: Option<Artifacts>,
}

pub struct AppState {
    session_id: String,
    sampled: Arc<PointCloud>,
    model: Arc<SparseModel>,
    outputs: Outputs,
    display_sampled: Arc<PointCloud>,
    display_sfm: Arc<PointCloud>,
    sampled_wire: Bytes,
    sfm_wire: Bytes,
    session: RwLock<Session>,
    merging: Mutex<()>,
}

impl AppState {
    pub fn new(prepared: Prepared, outputs: Outputs, initial: SimilarityTransform) -> Self {
        let display_sampled = decimate(&prepared.sampled, DISPLAY_LIMIT);
        let display_sfm = decimate(&prepared.model.point_cloud(), DISPLAY_LIMIT);
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        AppState {
            session_id: format!("{:x}-{:x}", std::process::id(), stamp),
            sampled_wire: Bytes::from(encode_cloud(&display_sampled)),
            sfm_wire: Bytes::from(encode_cloud(&display_sfm)),
            display_sampled: Arc::new(display_sampled),
            display_sfm: Arc::new(display_sfm),
            sampled: Arc::new(prepared.sampled),
            model: Arc::new(prepared.model),
            outputs,
            session: RwLock::new(Session {
                transform: initial,
                ..Session::default()
            }),
            merging: Mutex::new(()),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    /// Logs the detail and returns an opaque 500.
    fn internal(detail: impl std::fmt::Display) -> Self {
        eprintln!("internal error: {detail}");
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "internal server error",
        )
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Config(m) => ApiError::bad_request(m),
            AppError::Registration(r) => ApiError::bad_request(r.to_string()),
            other => ApiError::internal(other.line()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/session", get(get_session))
        .route("/session/clouds/{which}", get(get_cloud))
        .route("/session/transform", put(put_transform))
        .route("/session/correspondences", post(post_correspondences))
        .route("/session/estimate", post(post_estimate))
        .route("/session/merge", post(post_merge))
        .route("/session/preview", get(get_preview))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(|| async {
            ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
        }),
    }
}

/// `MESHPRIOR_BIND` if set, otherwise loopback.
pub fn bind_address() -> Result<SocketAddr, AppError> {
    let raw = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string());
    raw.parse()
        .map_err(|_| AppError::Config(format!("{BIND_ENV}=`{raw}` is not a socket address")))
}

pub async fn serve(
    state: Arc<AppState>,
    ui_dir: Option<PathBuf>,
    addr: SocketAddr,
) -> Result<(), AppError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::Config(format!("cannot bind {addr}: {e}")))?;
    let local = listener.local_addr().unwrap_or(addr);
    eprintln!("alignment service listening on http://{local}");
    axum::serve(listener, router(state, ui_dir))
        .await
        .map_err(|e| AppError::Io {
            path: PathBuf::from(local.to_string()),
            message: e.to_string(),
        })
}

async fn get_session(State(st): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let s = st.session.read().await;
    let images: Vec<_> = st
        .model
        .images
        .values()
        .map(|im| {
            let cam = st.model.cameras.get(&im.camera_id);
            json!({
                "id": im.id,
                "name": im.name,
                "width": cam.map(|c| c.width),
                "height": cam.map(|c| c.height),
            })
        })
        .collect();
    Json(json!({
        "session_id": st.session_id,
        "transform": s.transform,
        "correspondences": s.correspondences,
        "clouds": {
            "sampled": {
                "url": "/session/clouds/sampled",
                "frame": "mesh",
                "points": st.display_sampled.len(),
                "total": st.sampled.len(),
            },
            "sfm": {
                "url": "/session/clouds/sfm",
                "frame": "world",
                "points": st.display_sfm.len(),
                "total": st.model.points.len(),
            },
        },
        "images": images,
        "last_merge": s.last_merge.as_ref().map(artifacts_json),
    }))
}

async fn get_cloud(
    State(st): State<Arc<AppState>>,
    Path(which): Path<String>,
) -> ApiResult<Response> {
    let body = match which.as_str() {
        "sampled" => st.sampled_wire.clone(),
        "sfm" => st.sfm_wire.clone(),
        _ => {
            return Err(ApiError::new(
                StatusCode::NOT_FOUND,
                "not_found",
                format!("unknown cloud `{which}` (expected sampled or sfm)"),
            ))
        }
    };
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], body).into_response())
}

async fn put_transform(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<SimilarityTransform>> {
    let t: SimilarityTransform = parse_json(&body)?;
    st.session.write().await.transform = t;
    Ok(Json(t))
}

async fn post_correspondences(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    let edit: CorrespondenceEdit = parse_json(&body)?;
    let mut s = st.session.write().await;
    match edit {
        CorrespondenceEdit::Add { sampled, sfm } => {
            if sampled.iter().chain(&sfm).any(|v| !v.is_finite()) {
                return Err(ApiError::bad_request("coordinates must be finite"));
            }
            s.correspondences.push(Correspondence { sampled, sfm });
        }
        CorrespondenceEdit::Remove { index } => {
            if index >= s.correspondences.len() {
                return Err(ApiError::bad_request(format!(
                    "no correspondence {index} (have {})",
                    s.correspondences.len()
                )));
            }
            s.correspondences.remove(index);
        }
        CorrespondenceEdit::Clear => s.correspondences.clear(),
    }
    Ok(Json(json!({ "correspondences": s.correspondences })))
}

async fn post_estimate(State(st): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let pairs = st.session.read().await.correspondences.clone();
    if pairs.len() < MIN_PAIRS {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "too_few_correspondences",
            format!(
                "need at least {MIN_PAIRS} correspondences, have {}",
                pairs.len()
            ),
        ));
    }
    let src: Vec<Vec3> = pairs.iter().map(|p| p.sampled).collect();
    let dst: Vec<Vec3> = pairs.iter().map(|p| p.sfm).collect();
    match estimate_similarity(&src, &dst) {
        Ok(e) => Ok(Json(json!({
            "transform": e.transform,
            "residual_rms": e.residual_rms,
            "pairs": pairs.len(),
        }))),
        Err(e @ (RegistrationError::DegenerateConfiguration | RegistrationError::Reflection)) => {
            Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unfittable",
                e.to_string(),
            ))
        }
        Err(e) => Err(ApiError::bad_request(e.to_string())),
    }
}

fn artifacts_json(a: &Artifacts) -> serde_json::Value {
    json!({
        "ply": a.ply,
        "points3d": a.points3d,
        "sfm_points": a.sfm_points,
        "sampled_points": a.sampled_points,
        "merged_points": a.merged_points,
    })
}

async fn post_merge(State(st): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let _guard = st.merging.lock().await;
    let transform = st.session.read().await.transform;
    let (sampled, model, outputs) = (st.sampled.clone(), st.model.clone(), st.outputs.clone());
    let artifacts =
        tokio::task::spawn_blocking(move || finalize(&sampled, &model, &transform, &outputs))
            .await
            .map_err(ApiError::internal)??;
    let body = json!({
        "transform": transform,
        "artifacts": artifacts_json(&artifacts),
    });
    st.session.write().await.last_merge = Some(artifacts);
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
struct PreviewQuery {
    image_id: Option<String>,
    width: Option<u32>,
}

async fn get_preview(
    State(st): State<Arc<AppState>>,
    Query(q): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let id: u32 = q
        .image_id
        .as_deref()
        .ok_or_else(|| ApiError::bad_request("missing image_id"))?
        .parse()
        .map_err(|_| ApiError::bad_request("image_id must be an integer"))?;
    let pose = st.model.images.get(&id).cloned().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            format!("no image with id {id}"),
        )
    })?;
    let intrinsics = *st
        .model
        .cameras
        .get(&pose.camera_id)
        .ok_or_else(|| ApiError::internal(format!("image {id} has no camera")))?;
    let max_width = q.width.unwrap_or(PREVIEW_MAX_WIDTH);
    if max_width == 0 {
        return Err(ApiError::bad_request("width must be positive"));
    }
    let transform = st.session.read().await.transform;
    let (sampled, sfm) = (st.display_sampled.clone(), st.display_sfm.clone());
    let png = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, AppError> {
        let camera = preview_camera(intrinsics, pose, max_width);
        let cloud = merge_clouds(&apply_similarity(&sampled, &transform), &sfm);
        let gaussians = init_gaussians(&cloud)?;
        let img = render_preview(
            &gaussians,
            &camera,
            camera.intrinsics.width as u32,
            camera.intrinsics.height as u32,
            [0, 0, 0],
        );
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| AppError::Image {
                path: PathBuf::from("preview.png"),
                message: e.to_string(),
            })?;
        Ok(out.into_inner())
    })
    .await
    .map_err(ApiError::internal)?;
    let png = match png {
        Ok(p) => p,
        Err(AppError::Render(e)) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "empty_scene",
                e.to_string(),
            ))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

/// Camera downscaled uniformly so the image is at most `max_width` wide.
pub fn preview_camera(
    mut intrinsics: meshprior_core::CameraIntrinsics,
    pose: meshprior_core::ImagePose,
    max_width: u32,
) -> PreviewCamera {
    if intrinsics.width > max_width as u64 {
        let s = max_width as f64 / intrinsics.width as f64;
        intrinsics.width = max_width as u64;
        intrinsics.height = ((intrinsics.height as f64 * s).round() as u64).max(1);
        intrinsics.fx *= s;
        intrinsics.fy *= s;
        intrinsics.cx *= s;
        intrinsics.cy *= s;
    }
    PreviewCamera { intrinsics, pose }
}
