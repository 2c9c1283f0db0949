use anyhow::{bail, Context, Result};
use splatclimate::image_io::Image;
use splatclimate::scene::save_scene;
use splatclimate::style::{apply_transform, style_distance, transform_to_json, ColorTransform};

use super::{job_transform, opaque_pixels};
use crate::job::{load_job_scene, load_poses, JobArgs};

pub struct StyleReport {
    pub transform: ColorTransform,
    pub regularized: bool,
    /// Style distance of the content render before and after, when a style
    /// image was given.
    pub distance: Option<(f64, f64)>,
}

impl StyleReport {
    pub fn lines(&self) -> Vec<String> {
        let m = &self.transform.matrix;
        let rows: Vec<String> = (0..3).map(|r| format!("{:.6},{:.6},{:.6}", m[(r, 0)], m[(r, 1)], m[(r, 2)])).collect();
        let b = &self.transform.bias;
        let mut out = vec![
            format!("matrix={}", rows.join(";")),
            format!("bias={:.6},{:.6},{:.6}", b[0], b[1], b[2]),
            format!("regularized={}", self.regularized),
        ];
        if let Some((before, after)) = self.distance {
            out.push(format!("style_distance_before={before:.6}"));
            out.push(format!("style_distance_after={after:.6}"));
        }
        out
    }
}

pub fn run(args: &JobArgs) -> Result<()> {
    let out = args.require_out()?;
    let loaded = load_job_scene(args.require_scene()?, args.seed)?;
    let camera = load_poses(args.camera.as_deref(), &loaded.scene, args.resolution()?)?.swap_remove(0);
    let Some((transform, regularized)) = job_transform(args, &loaded.scene, &camera)? else {
        bail!("style needs --style or --transform");
    };
    let styled = apply_transform(&loaded.scene, &transform)?;

    let distance = match &args.style {
        Some(path) => {
            let style = Image::read(path)?;
            let before = style_distance(&opaque_pixels(&loaded.scene, &camera)?, &style);
            let after = style_distance(&opaque_pixels(&styled, &camera)?, &style);
            Some((before, after))
        }
        None => None,
    };

    save_scene(&styled, out).with_context(|| format!("writing {}", out.display()))?;
    if let Some(path) = &args.save_transform {
        std::fs::write(path, transform_to_json(&transform)).with_context(|| format!("writing {}", path.display()))?;
    }
    for line in (StyleReport { transform, regularized, distance }).lines() {
        println!("{line}");
    }
    Ok(())
}
