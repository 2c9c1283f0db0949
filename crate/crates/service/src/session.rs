//! Session state shared by every endpoint. All operations are synchronous;
//! the HTTP layer runs them on the blocking pool and serializes them through
//! one lock.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use splatclimate::climate::ClimateParams;
use splatclimate::image_io::Image;
use splatclimate::pipeline::{CacheEvent, Passes, ScenePipeline, Timings};
use splatclimate::scene::{CameraSpec, GaussianScene};
use splatclimate::style::{estimate_transform, load_transform, ColorTransform, EstimateMethod};

use crate::error::ApiError;

/// Alpha above which a content pixel counts as opaque for style estimation.
const OPAQUE_ALPHA: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneSummary {
    pub count: usize,
    pub bounds: Bounds,
    pub sh_degree: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneSummary {
    fn of(scene: &GaussianScene) -> Self {
        let b = scene.bounds();
        let bounds = if b.is_empty() { Bounds { min: [0.0; 3], max: [0.0; 3] } } else { Bounds { min: b.min.into(), max: b.max.into() } };
        SceneSummary { count: scene.len(), bounds, sh_degree: scene.sh_degree() }
    }
}

/// Where the active color transform came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StyleSource {
    None,
    Preset { name: String },
    Image { method: EstimateMethod, regularized: bool },
    Transform,
}

/// Style part of a parameter update.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum StyleUpdate {
    Preset(String),
    Image {
        png_base64: String,
        #[serde(default = "default_method")]
        method: EstimateMethod,
    },
    /// A transform document (`matrix` or `P`/`T`/`Q`, optional `bias`).
    Transform(Value),
}

fn default_method() -> EstimateMethod {
    EstimateMethod::FullCovariance
}

/// Server-known style transforms, listed to clients by name.
#[derive(Debug, Clone, Default)]
pub struct Presets {
    transforms: BTreeMap<String, ColorTransform>,
}

impl Presets {
    /// Loads every `*.json` transform in `dir`; unreadable files are skipped
    /// with a warning.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut transforms = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(name) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            match load_transform(&path) {
                Ok(t) => {
                    transforms.insert(name, t);
                }
                Err(e) => log::warn!("skipping style preset {}: {e}", path.display()),
            }
        }
        Ok(Presets { transforms })
    }

    pub fn from_map(transforms: BTreeMap<String, ColorTransform>) -> Self {
        Presets { transforms }
    }

    pub fn names(&self) -> Vec<String> {
        self.transforms.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&ColorTransform> {
        self.transforms.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Capabilities {
    pub style_presets: Vec<String>,
    pub passes: Passes,
    pub estimate_methods: [EstimateMethod; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformView {
    /// Row-major 3×3.
    pub matrix: [f64; 9],
    pub bias: [f64; 3],
}

impl From<&ColorTransform> for TransformView {
    fn from(t: &ColorTransform) -> Self {
        let m = &t.matrix;
        TransformView {
            matrix: [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]],
            bias: t.bias.into(),
        }
    }
}

/// Effective parameters as reported by `GET /params` and after updates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsView {
    pub climate: ClimateParams,
    pub style: StyleSource,
    pub transform: Option<TransformView>,
    pub camera: Option<CameraSpec>,
    pub capabilities: Capabilities,
    /// Snow placement cache outcome of this update, when it touched snow.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snow_cache: Option<CacheEvent>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderRequest {
    /// Falls back to the session camera.
    #[serde(default)]
    pub camera: Option<CameraSpec>,
    /// Wave phase time in seconds.
    #[serde(default)]
    pub time: f64,
    #[serde(default)]
    pub passes: Passes,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub frame_id: u64,
    pub image: Image,
    pub timings: Timings,
}

#[derive(Debug, Default)]
pub struct Session {
    pipeline: Option<ScenePipeline>,
    summary: Option<SceneSummary>,
    climate: ClimateParams,
    style: Option<StyleSource>,
    camera: Option<CameraSpec>,
    last_frame_id: u64,
}

/// Recursive merge of `patch` into `dst`. Objects merge key by key, `null`
/// removes the key (restoring its default), anything else replaces.
fn merge(dst: &mut Value, patch: Value) {
    match (dst, patch) {
        (Value::Object(d), Value::Object(p)) => {
            for (k, v) in p {
                if v.is_null() {
                    d.remove(&k);
                } else {
                    merge(d.entry(k).or_insert(Value::Object(Map::new())), v);
                }
            }
        }
        (d, p) => *d = p,
    }
}

/// Deserializes with the offending field path (unknown keys included)
/// reported on failure.
fn deserialize_at<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ApiError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().to_string();
        let field = match (prefix.is_empty(), path == ".") {
            (true, _) => path,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{path}"),
        };
        ApiError::invalid_field(field, msg)
    })
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn summary(&self) -> Option<&SceneSummary> {
        self.summary.as_ref()
    }

    pub fn climate(&self) -> &ClimateParams {
        &self.climate
    }

    pub fn last_frame_id(&self) -> u64 {
        self.last_frame_id
    }

    pub fn camera(&self) -> Option<&CameraSpec> {
        self.camera.as_ref()
    }

    /// Replaces the scene; style, snow placements and camera start over.
    pub fn load_scene(&mut self, scene: GaussianScene) -> SceneSummary {
        let summary = SceneSummary::of(&scene);
        let scene_bounds = scene.bounds();
        self.pipeline = Some(ScenePipeline::new(scene));
        self.style = None;
        self.camera = Some(CameraSpec::overview(&scene_bounds));
        self.summary = Some(summary.clone());
        summary
    }

    pub fn set_camera(&mut self, spec: CameraSpec) -> Result<(), ApiError> {
        spec.build()?;
        self.camera = Some(spec);
        Ok(())
    }

    pub fn params(&self, presets: &Presets) -> ParamsView {
        ParamsView {
            climate: self.climate.clone(),
            style: self.style.clone().unwrap_or(StyleSource::None),
            transform: self.pipeline.as_ref().and_then(|p| p.transform()).map(TransformView::from),
            camera: self.camera.clone(),
            capabilities: Capabilities {
                style_presets: presets.names(),
                passes: Passes::all(),
                estimate_methods: [EstimateMethod::MeanStd, EstimateMethod::FullCovariance],
            },
            snow_cache: None,
        }
    }

    /// Applies a partial parameter document. Nothing changes unless the whole
    /// update is valid.
    pub fn set_params(&mut self, body: Value, presets: &Presets) -> Result<ParamsView, ApiError> {
        let Value::Object(mut body) = body else {
            return Err(ApiError::bad_request("parameter update must be a JSON object"));
        };
        let style = match body.remove("style") {
            None => None,
            Some(Value::Null) => Some(None),
            Some(v) => Some(Some(deserialize_at::<StyleUpdate>(v, "style")?)),
        };

        let mut merged = serde_json::to_value(&self.climate).map_err(|e| ApiError::internal(e.to_string()))?;
        merge(&mut merged, Value::Object(body));
        let climate: ClimateParams = deserialize_at(merged, "")?;
        climate.validate()?;

        let resolved = match style {
            None => None,
            Some(None) => Some((None, None)),
            Some(Some(update)) => {
                let (t, source) = self.resolve_style(update, presets)?;
                Some((Some(t), Some(source)))
            }
        };

        let snow_changed = climate.snow.placement_key() != self.climate.snow.placement_key();
        if let Some((transform, source)) = resolved {
            if let Some(p) = self.pipeline.as_mut() {
                p.set_transform(transform)?;
            }
            self.style = source;
        }
        self.climate = climate;

        let mut snow_cache = None;
        if snow_changed && self.climate.snow.thickness > 0.0 {
            if let Some(p) = self.pipeline.as_mut() {
                p.snow(&self.climate.snow)?;
                snow_cache = p.cache_log().last().map(|(_, e)| *e);
            }
        }
        Ok(ParamsView { snow_cache, ..self.params(presets) })
    }

    fn resolve_style(&mut self, update: StyleUpdate, presets: &Presets) -> Result<(ColorTransform, StyleSource), ApiError> {
        if self.pipeline.is_none() {
            return Err(ApiError::no_scene());
        }
        match update {
            StyleUpdate::Preset(name) => match presets.get(&name) {
                Some(t) => Ok((t.clone(), StyleSource::Preset { name })),
                None => Err(ApiError::invalid_field("style.preset", format!("unknown preset `{name}`"))),
            },
            StyleUpdate::Transform(doc) => {
                let t = splatclimate::style::parse_transform(&doc.to_string())
                    .map_err(|e| ApiError::invalid_field("style.transform", e.to_string()))?;
                Ok((t, StyleSource::Transform))
            }
            StyleUpdate::Image { png_base64, method } => {
                use base64::Engine;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(png_base64.trim())
                    .map_err(|e| ApiError::invalid_field("style.image.png_base64", e.to_string()))?;
                let style = Image::decode(&bytes).map_err(|e| ApiError::invalid_field("style.image.png_base64", e.to_string()))?;
                let content = self.content_pixels()?;
                let est = estimate_transform(&content, &style.pixels, method)?;
                Ok((est.transform, StyleSource::Image { method, regularized: est.regularized }))
            }
        }
    }

    /// Opaque pixels of the unstyled scene seen from the session camera; all
    /// pixels when too few are opaque.
    fn content_pixels(&mut self) -> Result<Vec<Vector3<f64>>, ApiError> {
        let camera = self.camera.clone().ok_or_else(ApiError::no_scene)?.build()?;
        let pipeline = self.pipeline.as_ref().ok_or_else(ApiError::no_scene)?;
        let fb = splatclimate::rasterize(pipeline.base(), &camera, &pipeline.options).map_err(|e| ApiError::internal(e.to_string()))?;
        let opaque: Vec<_> = (0..fb.len()).filter(|&i| fb.alpha_acc[i] >= OPAQUE_ALPHA).map(|i| fb.color[i]).collect();
        Ok(if opaque.len() >= 2 { opaque } else { fb.color })
    }

    /// Renders with the session parameters and assigns the next frame id.
    pub fn render(&mut self, req: &RenderRequest) -> Result<RenderedFrame, ApiError> {
        if !(req.time >= 0.0 && req.time.is_finite()) {
            return Err(ApiError::invalid_field("time", "must be finite and >= 0"));
        }
        let mut spec = req.camera.clone().or_else(|| self.camera.clone()).ok_or_else(ApiError::no_scene)?;
        if req.width.is_some() || req.height.is_some() {
            let (w, h) = spec.resolution();
            spec = spec.with_resolution(req.width.unwrap_or(w), req.height.unwrap_or(h));
        }
        let camera = spec.build()?;
        let pipeline = self.pipeline.as_mut().ok_or_else(ApiError::no_scene)?;
        let frame = pipeline.render(&camera, &self.climate, req.passes, req.time)?;
        self.last_frame_id += 1;
        Ok(RenderedFrame { frame_id: self.last_frame_id, image: frame.buffer.to_image(), timings: frame.timings })
    }
}
