#![allow(dead_code)]

use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{header, Request, Response, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nalgebra::{Matrix3, Vector3};
use serde_json::{json, Value};
use splatclimate::style::ColorTransform;
use splatclimate_service::{app, AppState, Presets, Session};
use tower::ServiceExt;

pub const W: u32 = 48;
pub const H: u32 = 32;

pub fn synthetic_spec() -> Value {
    json!({
        "synthetic": {
            "seed": 7,
            "primitives": [
                { "type": "plane", "center": [0.0, 0.0, 0.0], "normal": [0.0, 1.0, 0.0], "half_extent": [1.5, 1.5],
                  "spacing": 0.15, "color": [0.4, 0.5, 0.3], "opacity": 0.95 },
                { "type": "sphere", "center": [0.0, 0.5, 0.0], "radius": 0.5, "spacing": 0.15,
                  "color": [0.7, 0.3, 0.2], "opacity": 0.95 }
            ]
        }
    })
}

pub fn presets() -> Presets {
    let warm = ColorTransform::new(Matrix3::from_diagonal(&Vector3::new(1.1, 0.95, 0.8)), Vector3::new(0.03, 0.0, -0.02)).unwrap();
    let mut map = BTreeMap::new();
    map.insert("warm".to_string(), warm);
    map.insert("identity".to_string(), ColorTransform::identity());
    Presets::from_map(map)
}

pub fn empty_app() -> Router {
    app(AppState::new(Session::new(), presets()))
}

pub async fn loaded_app() -> Router {
    let router = empty_app();
    let (status, _) = post_json(&router, "/scene", synthetic_spec()).await;
    assert_eq!(status, StatusCode::OK);
    router
}

pub async fn send(router: &Router, req: Request<Body>) -> Response<Body> {
    router.clone().oneshot(req).await.unwrap()
}

pub async fn body_bytes(resp: Response<Body>) -> Vec<u8> {
    resp.into_body().collect().await.unwrap().to_bytes().to_vec()
}

pub async fn get_json(router: &Router, uri: &str) -> (StatusCode, Value) {
    let resp = send(router, Request::get(uri).body(Body::empty()).unwrap()).await;
    let status = resp.status();
    (status, serde_json::from_slice(&body_bytes(resp).await).unwrap())
}

pub async fn post_json(router: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri).header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap();
    let resp = send(router, req).await;
    let status = resp.status();
    (status, serde_json::from_slice(&body_bytes(resp).await).unwrap())
}

/// Renders at the test resolution and returns (frame id, PNG bytes).
pub async fn render_png(router: &Router, mut body: Value) -> (u64, Vec<u8>) {
    body["width"] = json!(W);
    body["height"] = json!(H);
    let req = Request::post("/render").header(header::CONTENT_TYPE, "application/json").body(Body::from(body.to_string())).unwrap();
    let resp = send(router, req).await;
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "image/png");
    let id = resp.headers()["x-frame-id"].to_str().unwrap().parse().unwrap();
    (id, body_bytes(resp).await)
}
