use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::Json;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use splatclimate::pipeline::Timings;
use splatclimate::scene::synthetic::{generate_synthetic_scene, SyntheticSpec};
use splatclimate::scene::{load_scene, read_scene, CameraSpec, GaussianScene};

use crate::error::ApiError;
use crate::session::{ParamsView, RenderRequest, RenderedFrame, SceneSummary};
use crate::AppState;

/// JSON form of `POST /scene`; exactly one field is set.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum SceneSource {
    Path(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Deserialize)]
pub struct RenderQuery {
    #[serde(default)]
    pub format: Option<String>,
}

/// Frame as returned by `?format=json` and in stream events.
#[derive(Debug, Serialize)]
pub struct FrameJson {
    pub frame_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
    pub width: u32,
    pub height: u32,
    pub timings: Timings,
    pub png_base64: String,
}

impl FrameJson {
    pub fn new(frame: &RenderedFrame, index: Option<usize>) -> Result<Self, ApiError> {
        let png = frame.image.encode_png().map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(FrameJson {
            frame_id: frame.frame_id,
            index,
            width: frame.image.width,
            height: frame.image.height,
            timings: frame.timings.clone(),
            png_base64: base64::engine::general_purpose::STANDARD.encode(png),
        })
    }
}

/// `name=ms` pairs separated by `;`.
pub fn timings_header(t: &Timings) -> String {
    t.stages.iter().map(|(n, v)| format!("{n}={v:.3}")).collect::<Vec<_>>().join(";")
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let mut de = serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        if path == "." {
            ApiError::bad_request(msg)
        } else {
            ApiError::invalid_field(path, msg)
        }
    })
}

fn is_json(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"))
}

pub async fn health(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let summary = state.lock().summary().cloned();
    Ok(Json(serde_json::json!({ "status": "ok", "scene": summary })))
}

pub async fn get_scene(State(state): State<AppState>) -> Result<Json<SceneSummary>, ApiError> {
    state.lock().summary().cloned().map(Json).ok_or_else(ApiError::no_scene)
}

/// Loads a scene from a server path, a synthetic spec or an uploaded PLY body.
/// The previous scene stays active if parsing fails.
pub async fn post_scene(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Result<Json<SceneSummary>, ApiError> {
    let json = is_json(&headers);
    let scene = tokio::task::spawn_blocking(move || -> Result<GaussianScene, ApiError> {
        if json {
            match parse_json::<SceneSource>(&body)? {
                SceneSource::Path(p) => Ok(load_scene(p)?),
                SceneSource::Synthetic(spec) => Ok(generate_synthetic_scene(&spec)?.scene),
            }
        } else {
            Ok(read_scene(&body[..])?)
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    let summary = state.with_session(move |s, _| Ok(s.load_scene(scene))).await?;
    log::info!("loaded scene with {} gaussians", summary.count);
    state.notify();
    Ok(Json(summary))
}

pub async fn get_params(State(state): State<AppState>) -> Json<ParamsView> {
    Json(state.lock().params(state.presets()))
}

pub async fn post_params(State(state): State<AppState>, body: Bytes) -> Result<Json<ParamsView>, ApiError> {
    let update: Value = parse_json(&body)?;
    let view = state.with_session(move |s, presets| s.set_params(update, presets)).await?;
    state.notify();
    Ok(Json(view))
}

pub async fn get_camera(State(state): State<AppState>) -> Result<Json<CameraSpec>, ApiError> {
    state.lock().camera().cloned().map(Json).ok_or_else(ApiError::no_scene)
}

pub async fn post_camera(State(state): State<AppState>, body: Bytes) -> Result<Json<CameraSpec>, ApiError> {
    let spec: CameraSpec = parse_json(&body)?;
    let stored = spec.clone();
    state.with_session(move |s, _| s.set_camera(spec)).await?;
    state.notify();
    Ok(Json(stored))
}

/// Renders one frame. PNG by default with `x-frame-id` and `x-timings`
/// headers; `?format=json` returns a [`FrameJson`].
pub async fn render(State(state): State<AppState>, Query(q): Query<RenderQuery>, body: Bytes) -> Result<Response, ApiError> {
    let req: RenderRequest = if body.iter().all(u8::is_ascii_whitespace) { RenderRequest::default() } else { parse_json(&body)? };
    let frame = state.with_session(move |s, _| s.render(&req)).await?;
    match q.format.as_deref() {
        None | Some("png") => {
            let png = frame.image.encode_png().map_err(|e| ApiError::internal(e.to_string()))?;
            let mut resp = ([(header::CONTENT_TYPE, "image/png")], png).into_response();
            let h = resp.headers_mut();
            h.insert("x-frame-id", HeaderValue::from(frame.frame_id));
            if let Ok(v) = HeaderValue::from_str(&timings_header(&frame.timings)) {
                h.insert("x-timings", v);
            }
            Ok(resp)
        }
        Some("json") => Ok(Json(FrameJson::new(&frame, None)?).into_response()),
        Some(other) => Err(ApiError::invalid_field("format", format!("unknown format `{other}`, expected png or json"))),
    }
}
