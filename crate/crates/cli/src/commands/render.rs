use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use splatclimate::pipeline::{CacheEvent, Pass, ScenePipeline};

use super::{job_transform, timing_fields};
use crate::job::{load_climate, load_job_scene, load_poses, parse_passes, set_param, JobArgs, Sweep};

/// One encoded output and its file name.
pub struct Output {
    pub name: String,
    pub png: Vec<u8>,
}

/// Renders every pose for every sweep value. Returns the images and the
/// timing report; nothing is written.
pub fn render_job(args: &JobArgs) -> Result<(Vec<Output>, Vec<String>)> {
    let loaded = load_job_scene(args.require_scene()?, args.seed)?;
    let poses = load_poses(args.camera.as_deref(), &loaded.scene, args.resolution()?)?;
    let (climate, mut passes) = load_climate(args.climate.as_deref())?;
    let sweep = args.sweep.as_deref().map(Sweep::parse).transpose()?;
    let time = args.time()?;

    let mut pipeline = ScenePipeline::new(loaded.scene);
    if let Some((t, _)) = job_transform(args, pipeline.base(), &poses[0])? {
        pipeline.set_transform(Some(t))?;
        passes = passes.with(Pass::Style);
    }
    if let Some(p) = sweep.as_ref().and_then(Sweep::pass) {
        passes = passes.with(p);
    }
    if let Some(p) = &args.passes {
        passes = parse_passes(p)?;
    }

    let variants: Vec<(String, _)> = match &sweep {
        None => vec![(String::new(), climate)],
        Some(s) => s
            .labels
            .iter()
            .zip(&s.values)
            .map(|(label, &v)| Ok((format!("_{}_{label}", s.param), set_param(&climate, &s.param, v)?)))
            .collect::<Result<_>>()?,
    };

    let mut outputs = Vec::new();
    let mut report = Vec::new();
    for (suffix, climate) in &variants {
        if passes.snow && climate.snow.thickness > 0.0 {
            let (placed, ms) = pipeline.snow(&climate.snow)?;
            if pipeline.cache_log().last().is_some_and(|(_, e)| *e == CacheEvent::Miss) {
                let s = placed.stats;
                report.push(format!(
                    "snow_prep variant={} snow_prep_ms={ms:.3} count={} rays={} missed={} too_light={} too_steep={}",
                    variant_label(suffix),
                    placed.gaussians.len(),
                    s.rays,
                    s.missed,
                    s.too_light,
                    s.too_steep
                ));
            }
        }
        for (i, pose) in poses.iter().enumerate() {
            let name = format!("pose{i:03}{suffix}");
            let frame = pipeline.render(&pose.build()?, climate, passes, time).with_context(|| format!("rendering {name}"))?;
            report.push(format!("frame={name} {}", timing_fields(&frame.timings)));
            outputs.push(Output { png: frame.buffer.to_image().encode_png()?, name: format!("{name}.png") });
        }
    }
    Ok((outputs, report))
}

fn variant_label(suffix: &str) -> &str {
    if suffix.is_empty() {
        "base"
    } else {
        &suffix[1..]
    }
}

/// Writes every file under a temporary name first and renames afterwards, so
/// a failure leaves existing outputs untouched.
pub fn write_outputs(dir: &Path, outputs: &[Output], report: &[String]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files: Vec<(PathBuf, &[u8])> = outputs.iter().map(|o| (dir.join(&o.name), o.png.as_slice())).collect();
    let timings = report.iter().map(|l| format!("{l}\n")).collect::<String>();
    files.push((dir.join("timings.txt"), timings.as_bytes()));

    let mut staged = Vec::with_capacity(files.len());
    let result = files.iter().try_for_each(|(path, bytes)| {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        staged.push((tmp, path));
        Ok(())
    });
    if let Err(e) = result {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    for (tmp, path) in staged {
        fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))?;
    }
    Ok(())
}

pub fn run(args: &JobArgs) -> Result<()> {
    let out = args.require_out()?;
    let (outputs, report) = render_job(args)?;
    write_outputs(out, &outputs, &report)?;
    for line in &report {
        println!("{line}");
    }
    log::info!("wrote {} images to {}", outputs.len(), out.display());
    Ok(())
}
