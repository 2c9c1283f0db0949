use std::time::Instant;

use anyhow::{Context, Result};
use nalgebra::Vector3;
use splatclimate::climate::place_snow;
use splatclimate::climate::snow::SnowPlacement;
use splatclimate::scene::synthetic::SyntheticScene;
use splatclimate::scene::{save_scene, GaussianScene};

use crate::job::{load_climate, load_job_scene, load_synthetic, JobArgs};

/// Height above a snow center from which the ground-truth surface is probed.
const PROBE_LIFT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub mean: f64,
    pub max: f64,
    /// Snow centers with no analytic surface below them.
    pub unmatched: usize,
}

/// Distance between each snow center and the analytic surface below it plus
/// half the thickness, measured along `up`.
pub fn surface_deviation(placement: &SnowPlacement, truth: &SyntheticScene, up: Vector3<f64>, thickness: f64) -> Deviation {
    let up = up.normalize();
    let mut devs = Vec::with_capacity(placement.gaussians.len());
    let mut unmatched = 0;
    for g in &placement.gaussians {
        match truth.ray_distance(&(g.center + up * PROBE_LIFT), &-up) {
            Some(t) => devs.push(((t - PROBE_LIFT) - 0.5 * thickness).abs()),
            None => unmatched += 1,
        }
    }
    let mean = if devs.is_empty() { 0.0 } else { devs.iter().sum::<f64>() / devs.len() as f64 };
    Deviation { mean, max: devs.iter().copied().fold(0.0, f64::max), unmatched }
}

pub fn run(args: &JobArgs) -> Result<()> {
    let out = args.require_out()?;
    let loaded = load_job_scene(args.require_scene()?, args.seed)?;
    let (climate, _) = load_climate(args.climate.as_deref())?;
    let truth = match &args.ground_truth {
        Some(path) => Some(load_synthetic(path, args.seed)?),
        None => loaded.synthetic,
    };

    let start = Instant::now();
    let placement = place_snow(&loaded.scene, &climate.snow)?;
    let prep_ms = start.elapsed().as_secs_f64() * 1e3;

    let snow = GaussianScene::new(placement.gaussians.clone(), 0)?;
    save_scene(&snow, out).with_context(|| format!("writing {}", out.display()))?;

    let s = placement.stats;
    let mut line = format!(
        "count={} rays={} placed={} missed={} too_light={} too_steep={} snow_prep_ms={prep_ms:.3}",
        snow.len(),
        s.rays,
        s.placed,
        s.missed,
        s.too_light,
        s.too_steep
    );
    if let Some(truth) = &truth {
        let d = surface_deviation(&placement, truth, Vector3::from(climate.snow.up), climate.snow.thickness);
        line.push_str(&format!(" mean_deviation={:.6} max_deviation={:.6} unmatched={}", d.mean, d.max, d.unmatched));
    }
    println!("{line}");
    Ok(())
}
