//! The frame pipeline shared by the command line and the service: rasterize,
//! then the deferred passes in the fixed order style → snow → flood → smog,
//! with per-pass wall time.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::climate::snow::{extend_with_snow, place_snow, shade_snow, SnowPlacement};
use crate::climate::{apply_flood, apply_smog, ClimateError, ClimateParams, SnowParams};
use crate::raster::{rasterize, FrameBuffer, RasterError, RenderOptions};
use crate::scene::{Camera, GaussianScene, SceneError};
use crate::style::{apply_transform, ColorTransform, StyleError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Climate(#[from] ClimateError),
    #[error(transparent)]
    Style(#[from] StyleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Style,
    Snow,
    Flood,
    Smog,
}

impl Pass {
    /// Execution order.
    pub const ORDER: [Pass; 4] = [Pass::Style, Pass::Snow, Pass::Flood, Pass::Smog];

    pub fn name(self) -> &'static str {
        match self {
            Pass::Style => "style",
            Pass::Snow => "snow",
            Pass::Flood => "flood",
            Pass::Smog => "smog",
        }
    }

    pub fn parse(s: &str) -> Option<Pass> {
        Pass::ORDER.into_iter().find(|p| p.name() == s)
    }
}

/// A set of enabled passes. Serialized as a list of names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Pass>", into = "Vec<Pass>")]
pub struct Passes {
    pub style: bool,
    pub snow: bool,
    pub flood: bool,
    pub smog: bool,
}

impl Passes {
    pub fn none() -> Self {
        Passes::default()
    }

    pub fn all() -> Self {
        Passes { style: true, snow: true, flood: true, smog: true }
    }

    pub fn contains(&self, p: Pass) -> bool {
        match p {
            Pass::Style => self.style,
            Pass::Snow => self.snow,
            Pass::Flood => self.flood,
            Pass::Smog => self.smog,
        }
    }

    pub fn with(mut self, p: Pass) -> Self {
        match p {
            Pass::Style => self.style = true,
            Pass::Snow => self.snow = true,
            Pass::Flood => self.flood = true,
            Pass::Smog => self.smog = true,
        }
        self
    }
}

impl From<Vec<Pass>> for Passes {
    fn from(v: Vec<Pass>) -> Self {
        v.into_iter().fold(Passes::none(), Passes::with)
    }
}

impl From<Passes> for Vec<Pass> {
    fn from(p: Passes) -> Self {
        Pass::ORDER.into_iter().filter(|x| p.contains(*x)).collect()
    }
}

/// Wall time per stage in milliseconds, in execution order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn push(&mut self, name: &str, ms: f64) {
        self.stages.push((name.to_string(), ms));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.stages.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// `name=value` lines.
    pub fn to_key_value(&self) -> String {
        self.stages.iter().map(|(n, v)| format!("{n}_ms={v:.3}\n")).collect()
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Whether a snow placement came from the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheEvent {
    Hit,
    Miss,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub buffer: FrameBuffer,
    pub timings: Timings,
}

/// Scene state derived from an immutable base scene: the styled scene, snow
/// placements keyed by their parameters, and the scene actually rendered.
#[derive(Debug, Clone)]
pub struct ScenePipeline {
    base: Arc<GaussianScene>,
    transform: Option<ColorTransform>,
    styled: Option<Arc<GaussianScene>>,
    snow_cache: HashMap<u64, Arc<SnowPlacement>>,
    cache_log: Vec<(u64, CacheEvent)>,
    /// Last rendered scene: (styled?, snow key) and the scene itself.
    combined: Option<((bool, Option<u64>), Arc<GaussianScene>)>,
    pub options: RenderOptions,
}

impl ScenePipeline {
    pub fn new(base: GaussianScene) -> Self {
        ScenePipeline {
            base: Arc::new(base),
            transform: None,
            styled: None,
            snow_cache: HashMap::new(),
            cache_log: Vec::new(),
            combined: None,
            options: RenderOptions::default(),
        }
    }

    pub fn base(&self) -> &GaussianScene {
        &self.base
    }

    pub fn transform(&self) -> Option<&ColorTransform> {
        self.transform.as_ref()
    }

    pub fn set_transform(&mut self, t: Option<ColorTransform>) -> Result<(), PipelineError> {
        if let Some(t) = &t {
            t.validate()?;
        }
        if t != self.transform {
            self.transform = t;
            self.styled = None;
            self.combined = None;
        }
        Ok(())
    }

    pub fn cache_log(&self) -> &[(u64, CacheEvent)] {
        &self.cache_log
    }

    /// Base scene with the active transform applied; time spent if computed now.
    fn styled_scene(&mut self) -> Result<(Arc<GaussianScene>, f64), PipelineError> {
        let Some(t) = &self.transform else {
            return Ok((self.base.clone(), 0.0));
        };
        if let Some(s) = &self.styled {
            return Ok((s.clone(), 0.0));
        }
        let start = Instant::now();
        let s = Arc::new(apply_transform(&self.base, t)?);
        self.styled = Some(s.clone());
        Ok((s, ms_since(start)))
    }

    /// Snow placed on the base geometry, from the cache when possible; the
    /// elapsed placement time is zero on a hit.
    pub fn snow(&mut self, p: &SnowParams) -> Result<(Arc<SnowPlacement>, f64), PipelineError> {
        let key = p.placement_key();
        if let Some(s) = self.snow_cache.get(&key) {
            self.cache_log.push((key, CacheEvent::Hit));
            return Ok((s.clone(), 0.0));
        }
        let start = Instant::now();
        let placed = Arc::new(place_snow(&self.base, p)?);
        let elapsed = ms_since(start);
        log::debug!("placed {} snow gaussians in {elapsed:.1} ms", placed.gaussians.len());
        self.cache_log.push((key, CacheEvent::Miss));
        self.snow_cache.insert(key, placed.clone());
        Ok((placed, elapsed))
    }

    /// The scene a frame with `passes` rasterizes, and the preparation timings.
    pub fn scene_for(&mut self, climate: &ClimateParams, passes: Passes) -> Result<(Arc<GaussianScene>, Timings), PipelineError> {
        let mut timings = Timings::default();
        let use_style = passes.style && self.transform.is_some();
        let snow_key = (passes.snow && climate.snow.thickness > 0.0).then(|| climate.snow.placement_key());
        let (styled, style_ms) = if use_style { self.styled_scene()? } else { (self.base.clone(), 0.0) };
        timings.push("style", style_ms);
        let mut snow_ms = 0.0;
        if let Some(key) = snow_key {
            let (placed, ms) = self.snow(&climate.snow)?;
            snow_ms = ms;
            if !matches!(&self.combined, Some((k, _)) if *k == (use_style, Some(key))) {
                let scene = extend_with_snow(&styled, placed.gaussians.clone())?;
                self.combined = Some(((use_style, Some(key)), Arc::new(scene)));
            }
        }
        timings.push("snow_prep", snow_ms);
        let scene = match (&self.combined, snow_key) {
            (Some((k, s)), Some(key)) if *k == (use_style, Some(key)) => s.clone(),
            _ => styled,
        };
        Ok((scene, timings))
    }

    /// Renders one frame. Timings list `style`, `snow_prep`, `raster`, then the
    /// enabled deferred passes, then `total`.
    pub fn render(&mut self, camera: &Camera, climate: &ClimateParams, passes: Passes, time: f64) -> Result<Frame, PipelineError> {
        let start = Instant::now();
        camera.validate()?;
        climate.validate()?;
        let (scene, mut timings) = self.scene_for(climate, passes)?;
        let frame = render_passes(&scene, camera, climate, passes, time, &self.options)?;
        timings.stages.extend(frame.timings.stages);
        timings.push("total", ms_since(start));
        Ok(Frame { buffer: frame.buffer, timings })
    }
}

/// Rasterizes `scene` and runs the enabled deferred passes. The scene must
/// already carry any styling and snow Gaussians.
pub fn render_passes(
    scene: &GaussianScene,
    camera: &Camera,
    climate: &ClimateParams,
    passes: Passes,
    time: f64,
    opts: &RenderOptions,
) -> Result<Frame, PipelineError> {
    let mut timings = Timings::default();
    let t = Instant::now();
    let mut fb = rasterize(scene, camera, opts)?;
    timings.push("raster", ms_since(t));
    if passes.snow {
        let t = Instant::now();
        fb = shade_snow(&fb, &climate.snow)?;
        timings.push("snow", ms_since(t));
    }
    if passes.flood {
        let t = Instant::now();
        fb = apply_flood(&fb, camera, &climate.water, time)?;
        timings.push("flood", ms_since(t));
    }
    if passes.smog {
        let t = Instant::now();
        fb = apply_smog(&fb, &climate.smog)?;
        timings.push("smog", ms_since(t));
    }
    Ok(Frame { buffer: fb, timings })
}
