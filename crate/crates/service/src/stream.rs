//! `GET /stream`: frames as server-sent events.
//!
//! * `mode=orbit` (default) renders `frames` poses evenly spaced in azimuth
//!   around the session camera, then sends `end`.
//! * `mode=live` renders one frame immediately and another after every scene,
//!   parameter or camera change. Changes arriving during a render collapse
//!   into one frame. `frames` optionally bounds the stream.
//!
//! Each frame uses the parameters current when its render starts.

use std::convert::Infallible;

use axum::extract::{Query, State};
use axum::response::sse::{Event, KeepAlive, Sse};
use futures::stream::{self, Stream};
use serde::Deserialize;
use splatclimate::pipeline::Passes;
use splatclimate::scene::{orbit_path, CameraSpec};
use tokio::sync::watch;

use crate::api::FrameJson;
use crate::error::ApiError;
use crate::session::RenderRequest;
use crate::AppState;

pub const DEFAULT_ORBIT_FRAMES: usize = 36;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamMode {
    #[default]
    Orbit,
    Live,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamQuery {
    #[serde(default)]
    pub mode: StreamMode,
    pub frames: Option<usize>,
    /// Comma-separated pass names.
    pub passes: Option<String>,
    #[serde(default)]
    pub time: f64,
    pub width: Option<u32>,
    pub height: Option<u32>,
}

enum Source {
    Orbit(Vec<CameraSpec>),
    Live(watch::Receiver<u64>),
}

struct Cursor {
    state: AppState,
    source: Source,
    template: RenderRequest,
    limit: Option<usize>,
    index: usize,
    finished: bool,
}

fn parse_passes(s: &str) -> Result<Passes, ApiError> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).try_fold(Passes::none(), |acc, name| {
        splatclimate::pipeline::Pass::parse(name)
            .map(|p| acc.with(p))
            .ok_or_else(|| ApiError::invalid_field("passes", format!("unknown pass `{name}`")))
    })
}

fn error_event(e: &ApiError) -> Event {
    Event::default().event("error").json_data(serde_json::json!({ "error": e })).unwrap_or_default()
}

fn end_event(frames: usize) -> Event {
    Event::default().event("end").data(serde_json::json!({ "frames": frames }).to_string())
}

async fn start(state: AppState, q: StreamQuery) -> Result<Cursor, ApiError> {
    let passes = q.passes.as_deref().map(parse_passes).transpose()?.unwrap_or_default();
    let template = RenderRequest { camera: None, time: q.time, passes, width: q.width, height: q.height };
    let source = match q.mode {
        StreamMode::Orbit => {
            let count = q.frames.unwrap_or(DEFAULT_ORBIT_FRAMES);
            let start = state.lock().camera().cloned().ok_or_else(ApiError::no_scene)?;
            Source::Orbit(orbit_path(&start, count)?)
        }
        StreamMode::Live => {
            let mut rx = state.subscribe();
            rx.mark_changed();
            Source::Live(rx)
        }
    };
    let limit = match &source {
        Source::Orbit(poses) => Some(poses.len()),
        Source::Live(_) => q.frames,
    };
    Ok(Cursor { state, source, template, limit, index: 0, finished: false })
}

async fn next(mut c: Cursor) -> Option<(Event, Cursor)> {
    if c.finished {
        return None;
    }
    if c.limit.is_some_and(|n| c.index >= n) {
        c.finished = true;
        return Some((end_event(c.index), c));
    }
    let mut req = c.template.clone();
    match &mut c.source {
        Source::Orbit(poses) => req.camera = Some(poses[c.index].clone()),
        Source::Live(rx) => {
            if rx.changed().await.is_err() {
                c.finished = true;
                return Some((end_event(c.index), c));
            }
            rx.borrow_and_update();
        }
    }
    let index = c.index;
    let result = c.state.with_session(move |s, _| s.render(&req)).await.and_then(|f| FrameJson::new(&f, Some(index)));
    let event = match result {
        Ok(frame) => Event::default().event("frame").json_data(frame).unwrap_or_else(|e| error_event(&ApiError::internal(e.to_string()))),
        Err(e) => {
            log::warn!("stream frame {index} failed: {e}");
            c.limit = Some(index + 1);
            error_event(&e)
        }
    };
    c.index += 1;
    Some((event, c))
}

pub async fn stream(
    State(state): State<AppState>,
    Query(q): Query<StreamQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let cursor = start(state, q).await?;
    let events = stream::unfold(cursor, next);
    Ok(Sse::new(futures::StreamExt::map(events, Ok)).keep_alive(KeepAlive::default()))
}
