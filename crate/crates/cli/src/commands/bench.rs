use anyhow::{ensure, Result};
use splatclimate::pipeline::{Passes, ScenePipeline};

use super::job_transform;
use crate::job::{load_climate, load_job_scene, load_poses, parse_passes, JobArgs};

pub const MIN_RUNS: usize = 10;

/// Median wall time per stage at one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub width: u32,
    pub height: u32,
    pub runs: usize,
    /// Stage name and median milliseconds, in execution order.
    pub medians: Vec<(String, f64)>,
}

impl BenchRow {
    pub fn line(&self) -> String {
        let stages: Vec<String> = self.medians.iter().map(|(n, v)| format!("{n}_ms={v:.3}")).collect();
        format!("resolution={}x{} runs={} {}", self.width, self.height, self.runs, stages.join(" "))
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Header line and one row per resolution.
pub fn bench(args: &JobArgs) -> Result<(String, Vec<BenchRow>)> {
    let runs = args.runs.unwrap_or(MIN_RUNS);
    ensure!(runs >= MIN_RUNS, "--runs must be at least {MIN_RUNS}");
    let loaded = load_job_scene(args.require_scene()?, args.seed)?;
    let pose = load_poses(args.camera.as_deref(), &loaded.scene, None)?.swap_remove(0);
    let (climate, _) = load_climate(args.climate.as_deref())?;
    let passes = match &args.passes {
        Some(p) => parse_passes(p)?,
        None => Passes::all(),
    };
    let time = args.time()?;
    let mut resolutions = args.resolutions()?;
    if resolutions.is_empty() {
        resolutions.push(pose.resolution());
    }

    let count = loaded.scene.len();
    let mut pipeline = ScenePipeline::new(loaded.scene);
    if let Some((t, _)) = job_transform(args, pipeline.base(), &pose)? {
        pipeline.set_transform(Some(t))?;
    }
    let snow_prep_ms = if passes.snow && climate.snow.thickness > 0.0 { pipeline.snow(&climate.snow)?.1 } else { 0.0 };
    let header = format!("gaussians={count} snow_prep_ms={snow_prep_ms:.3}");

    let mut rows = Vec::with_capacity(resolutions.len());
    for (w, h) in resolutions {
        let camera = pose.with_resolution(w, h).build()?;
        // warm-up builds the styled and snowed scene once
        pipeline.render(&camera, &climate, passes, time)?;
        let mut samples: Vec<(String, Vec<f64>)> = Vec::new();
        for _ in 0..runs {
            let frame = pipeline.render(&camera, &climate, passes, time)?;
            for (name, ms) in frame.timings.stages {
                match samples.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, v)) => v.push(ms),
                    None => samples.push((name, vec![ms])),
                }
            }
        }
        let medians = samples.into_iter().map(|(n, mut v)| (n, median(&mut v))).collect();
        rows.push(BenchRow { width: w, height: h, runs, medians });
    }
    Ok((header, rows))
}

pub fn run(args: &JobArgs) -> Result<()> {
    let (header, rows) = bench(args)?;
    println!("{header}");
    for row in &rows {
        println!("{}", row.line());
    }
    Ok(())
}
