pub mod bench;
pub mod render;
pub mod snow;
pub mod style;

use anyhow::{Context, Result};
use splatclimate::image_io::Image;
use splatclimate::pipeline::Timings;
use splatclimate::scene::{CameraSpec, GaussianScene};
use splatclimate::style::{estimate_transform, load_transform, ColorTransform, EstimateMethod, TransformEstimate};
use splatclimate::{rasterize, RenderOptions};

use crate::job::JobArgs;

/// Alpha above which a pixel counts as opaque for style statistics.
pub const OPAQUE_ALPHA: f64 = 0.999;

/// Opaque pixels of `scene` seen from `camera`, as a one-row image; every
/// pixel when fewer than two are opaque.
pub fn opaque_pixels(scene: &GaussianScene, camera: &CameraSpec) -> Result<Image> {
    let fb = rasterize(scene, &camera.build()?, &RenderOptions::default())?;
    let opaque: Vec<_> = (0..fb.len()).filter(|&i| fb.alpha_acc[i] >= OPAQUE_ALPHA).map(|i| fb.color[i]).collect();
    let pixels = if opaque.len() >= 2 { opaque } else { fb.color };
    Ok(Image { width: pixels.len() as u32, height: 1, pixels })
}

pub fn estimate_from_image(scene: &GaussianScene, camera: &CameraSpec, style: &Image, method: EstimateMethod) -> Result<TransformEstimate> {
    let content = opaque_pixels(scene, camera)?;
    Ok(estimate_transform(&content.pixels, &style.pixels, method)?)
}

/// The transform named by `--transform`, else estimated from `--style`;
/// inverted under `--inverse`.
pub fn job_transform(args: &JobArgs, scene: &GaussianScene, camera: &CameraSpec) -> Result<Option<(ColorTransform, bool)>> {
    let found = match (&args.transform, &args.style) {
        (Some(path), _) => Some((load_transform(path).with_context(|| format!("loading transform {}", path.display()))?, false)),
        (None, Some(path)) => {
            let style = Image::read(path).with_context(|| format!("reading style image {}", path.display()))?;
            let est = estimate_from_image(scene, camera, &style, args.method()?)?;
            Some((est.transform, est.regularized))
        }
        (None, None) => None,
    };
    match found {
        Some((t, reg)) if args.inverse => Ok(Some((t.invert()?, reg))),
        other => Ok(other),
    }
}

/// `name_ms=value` pairs on one line.
pub fn timing_fields(t: &Timings) -> String {
    t.stages.iter().map(|(n, v)| format!("{n}_ms={v:.3}")).collect::<Vec<_>>().join(" ")
}
