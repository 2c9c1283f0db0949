mod common;

use axum::body::Body;
use axum::http::{Request, Response, StatusCode};
use axum::Router;
use base64::Engine;
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use splatclimate::scene::{orbit_path, CameraSpec};

/// Incremental SSE reader over a response body.
struct Events {
    body: Body,
    buf: String,
}

impl Events {
    fn new(resp: Response<Body>) -> Self {
        assert_eq!(resp.status(), StatusCode::OK);
        assert_eq!(resp.headers()["content-type"], "text/event-stream");
        Events { body: resp.into_body(), buf: String::new() }
    }

    /// Next (event name, data) pair, or `None` at end of stream.
    async fn next(&mut self) -> Option<(String, Value)> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let mut name = String::new();
                let mut data = String::new();
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        name = v.trim().to_string();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if name.is_empty() {
                    continue;
                }
                return Some((name, serde_json::from_str(&data).unwrap()));
            }
            let frame = self.body.frame().await?.unwrap();
            if let Ok(data) = frame.into_data() {
                self.buf.push_str(std::str::from_utf8(&data).unwrap());
            }
        }
    }
}

async fn open(router: &Router, query: &str) -> Events {
    let resp = send(router, Request::get(format!("/stream?{query}")).body(Body::empty()).unwrap()).await;
    Events::new(resp)
}

fn png_of(frame: &Value) -> Vec<u8> {
    base64::engine::general_purpose::STANDARD.decode(frame["png_base64"].as_str().unwrap()).unwrap()
}

async fn session_camera(router: &Router) -> CameraSpec {
    let (_, cam) = get_json(router, "/camera").await;
    serde_json::from_value(cam).unwrap()
}

#[tokio::test]
async fn orbit_stream_sends_requested_frames_in_order() {
    let router = loaded_app().await;
    let mut events = open(&router, &format!("frames=10&width={W}&height={H}")).await;
    let mut ids = Vec::new();
    while let Some((name, data)) = events.next().await {
        match name.as_str() {
            "frame" => {
                assert_eq!(data["index"], ids.len());
                assert_eq!((data["width"].as_u64(), data["height"].as_u64()), (Some(W as u64), Some(H as u64)));
                ids.push(data["frame_id"].as_u64().unwrap());
            }
            "end" => {
                assert_eq!(data["frames"], 10);
                break;
            }
            other => panic!("unexpected event {other}: {data}"),
        }
    }
    assert_eq!(ids.len(), 10);
    assert!(ids.windows(2).all(|w| w[0] < w[1]), "{ids:?}");
    assert!(events.next().await.is_none());
}

#[tokio::test]
async fn orbit_frames_match_single_renders() {
    let router = loaded_app().await;
    let poses = orbit_path(&session_camera(&router).await, 4).unwrap();
    let mut events = open(&router, &format!("frames=4&passes=smog&width={W}&height={H}")).await;
    let (_, first) = events.next().await.unwrap();
    let (_, second) = events.next().await.unwrap();
    drop(events);
    let (_, direct) = render_png(&router, json!({ "camera": poses[1], "passes": ["smog"] })).await;
    assert_ne!(png_of(&first), png_of(&second));
    assert_eq!(png_of(&second), direct);
}

#[tokio::test]
async fn param_update_applies_to_later_frames() {
    let router = loaded_app().await;
    let poses = orbit_path(&session_camera(&router).await, 3).unwrap();
    let mut events = open(&router, &format!("frames=3&passes=smog&width={W}&height={H}")).await;
    let (_, f0) = events.next().await.unwrap();

    let (status, _) = post_json(&router, "/params", json!({ "smog": { "density": 1.5 } })).await;
    assert_eq!(status, StatusCode::OK);
    let (_, f1) = events.next().await.unwrap();
    let (_, f2) = events.next().await.unwrap();
    assert_eq!(events.next().await.unwrap().0, "end");

    for (frame, pose) in [(&f1, &poses[1]), (&f2, &poses[2])] {
        let (_, direct) = render_png(&router, json!({ "camera": pose, "passes": ["smog"] })).await;
        assert_eq!(png_of(frame), direct);
    }
    post_json(&router, "/params", json!({ "smog": null })).await;
    let (_, clear) = render_png(&router, json!({ "camera": poses[0], "passes": ["smog"] })).await;
    assert_eq!(png_of(&f0), clear);
}

#[tokio::test]
async fn disconnect_leaves_service_usable() {
    let router = loaded_app().await;
    let mut events = open(&router, &format!("frames=50&width={W}&height={H}")).await;
    let (name, _) = events.next().await.unwrap();
    assert_eq!(name, "frame");
    drop(events);
    let (id, png) = render_png(&router, json!({})).await;
    assert!(id >= 2);
    assert!(!png.is_empty());
}

#[tokio::test]
async fn live_stream_follows_changes() {
    let router = loaded_app().await;
    let mut events = open(&router, &format!("mode=live&frames=2&passes=smog&width={W}&height={H}")).await;
    let (name, f0) = events.next().await.unwrap();
    assert_eq!(name, "frame");
    post_json(&router, "/params", json!({ "smog": { "density": 1.0 } })).await;
    let (name, f1) = events.next().await.unwrap();
    assert_eq!(name, "frame");
    assert_ne!(png_of(&f0), png_of(&f1));
    assert!(f1["frame_id"].as_u64() > f0["frame_id"].as_u64());
    assert_eq!(events.next().await.unwrap().0, "end");
}

#[tokio::test]
async fn stream_errors() {
    let router = empty_app();
    let resp = send(&router, Request::get("/stream?frames=3").body(Body::empty()).unwrap()).await;
    assert_eq!(resp.status(), StatusCode::CONFLICT);

    let router = loaded_app().await;
    let resp = send(&router, Request::get("/stream?passes=rain").body(Body::empty()).unwrap()).await;
    assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let cam = json!({ "type": "look_at", "eye": [0.0, 2.0, -4.0], "target": [0.0, 0.0, 0.0] });
    post_json(&router, "/camera", cam).await;
    let resp = send(&router, Request::get("/stream?frames=3").body(Body::empty()).unwrap()).await;
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST, "orbit streams need an orbit camera");
}
