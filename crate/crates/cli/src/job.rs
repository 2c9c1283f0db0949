//! Job options shared by every subcommand, their config-file mirror, and
//! loading of the inputs they name.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::Args;
use serde::Deserialize;
use serde_json::Value;
use splatclimate::climate::ClimateParams;
use splatclimate::pipeline::{Pass, Passes};
use splatclimate::scene::synthetic::{generate_synthetic_scene, SyntheticScene, SyntheticSpec};
use splatclimate::scene::{load_scene, orbit_path, CameraSpec, GaussianScene};
use splatclimate::style::EstimateMethod;

/// Options accepted on the command line and, under the same names, in a TOML
/// config file. Flags win over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct JobArgs {
    /// Scene: a PLY file, or a synthetic scene JSON (`.json`).
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Camera document or a path to one: a camera spec, a list of specs, or
    /// `{"orbit": <orbit spec>, "frames": N}`.
    #[arg(long)]
    pub camera: Option<String>,
    /// Climate parameter JSON.
    #[arg(long)]
    pub climate: Option<PathBuf>,
    /// Style image (PNG) to estimate a color transform from.
    #[arg(long)]
    pub style: Option<PathBuf>,
    /// Color transform JSON.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// Output directory (render) or file (style, snow-prep).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `<param>=<v1>,<v2>,...` over a numeric climate field, e.g. `smog.density=0,0.05`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// `WxH`; bench accepts a comma-separated list.
    #[arg(long)]
    pub resolution: Option<String>,
    /// Seed for synthetic scenes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated passes (`style,snow,flood,smog`, `all` or `none`).
    #[arg(long)]
    pub passes: Option<String>,
    /// Wave time in seconds.
    #[arg(long)]
    pub time: Option<f64>,
    /// Style estimation method: `mean_std` or `full_covariance`.
    #[arg(long)]
    pub method: Option<String>,
    /// Apply the inverse of the transform.
    #[arg(long)]
    #[serde(default)]
    pub inverse: bool,
    /// Also write the transform used by `style`.
    #[arg(long)]
    pub save_transform: Option<PathBuf>,
    /// Synthetic scene JSON to measure snow placement against.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Timed runs per resolution for bench.
    #[arg(long)]
    pub runs: Option<usize>,
}

macro_rules! prefer {
    ($a:ident, $b:ident, $($f:ident),*) => {
        JobArgs { $($f: $a.$f.or($b.$f),)* inverse: $a.inverse || $b.inverse }
    };
}

impl JobArgs {
    /// Reads a TOML config; relative paths in it are taken from its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut args: JobArgs = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut args.scene, &mut args.climate, &mut args.style, &mut args.transform, &mut args.out, &mut args.save_transform, &mut args.ground_truth]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(cam) = &mut args.camera {
            let trimmed = cam.trim_start();
            if !trimmed.starts_with('{') && !trimmed.starts_with('[') && Path::new(cam.as_str()).is_relative() {
                *cam = base.join(cam.as_str()).to_string_lossy().into_owned();
            }
        }
        Ok(args)
    }

    /// `self` with unset options filled from `file`.
    pub fn or(self, file: JobArgs) -> JobArgs {
        let (a, b) = (self, file);
        prefer!(a, b, scene, camera, climate, style, transform, out, sweep, resolution, seed, passes, time, method, save_transform, ground_truth, runs)
    }

    pub fn require_scene(&self) -> Result<&Path> {
        self.scene.as_deref().ok_or_else(|| anyhow!("--scene is required"))
    }

    pub fn require_out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
    }

    pub fn time(&self) -> Result<f64> {
        let t = self.time.unwrap_or(0.0);
        ensure!(t.is_finite() && t >= 0.0, "--time must be finite and >= 0, got {t}");
        Ok(t)
    }

    pub fn method(&self) -> Result<EstimateMethod> {
        match self.method.as_deref() {
            None => Ok(EstimateMethod::FullCovariance),
            Some(m) => serde_json::from_value(Value::String(m.to_string()))
                .map_err(|_| anyhow!("unknown --method `{m}`, expected mean_std or full_covariance")),
        }
    }

    pub fn resolutions(&self) -> Result<Vec<(u32, u32)>> {
        self.resolution.as_deref().map(parse_resolutions).transpose().map(Option::unwrap_or_default)
    }

    /// The single `--resolution`, if given.
    pub fn resolution(&self) -> Result<Option<(u32, u32)>> {
        let r = self.resolutions()?;
        ensure!(r.len() <= 1, "expected one --resolution, got {}", r.len());
        Ok(r.first().copied())
    }
}

pub fn parse_resolutions(s: &str) -> Result<Vec<(u32, u32)>> {
    s.split(',')
        .map(|r| {
            let (w, h) = r.trim().split_once(['x', 'X']).ok_or_else(|| anyhow!("resolution `{r}` is not WxH"))?;
            let (w, h): (u32, u32) = (w.parse()?, h.parse()?);
            ensure!(w > 0 && h > 0, "resolution `{r}` must be positive");
            Ok((w, h))
        })
        .collect()
}

/// A scene and, for synthetic inputs, its analytic surfaces.
pub struct LoadedScene {
    pub scene: GaussianScene,
    pub synthetic: Option<SyntheticScene>,
}

fn is_json(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn load_synthetic(path: &Path, seed: Option<u64>) -> Result<SyntheticScene> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec: SyntheticSpec = serde_json::from_str(&text).with_context(|| format!("parsing synthetic scene {}", path.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok(generate_synthetic_scene(&spec)?)
}

pub fn load_job_scene(path: &Path, seed: Option<u64>) -> Result<LoadedScene> {
    if is_json(path) {
        let synthetic = load_synthetic(path, seed)?;
        return Ok(LoadedScene { scene: synthetic.scene.clone(), synthetic: Some(synthetic) });
    }
    if seed.is_some() {
        log::warn!("--seed only affects synthetic scenes");
    }
    let scene = load_scene(path).with_context(|| format!("loading scene {}", path.display()))?;
    Ok(LoadedScene { scene, synthetic: None })
}

/// Climate parameters and the passes implied by the sections present.
pub fn load_climate(path: Option<&Path>) -> Result<(ClimateParams, Passes)> {
    let Some(path) = path else {
        return Ok((ClimateParams::default(), Passes::none()));
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading climate {}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).with_context(|| format!("parsing climate {}", path.display()))?;
    let mut passes = Passes::none();
    if let Some(obj) = doc.as_object() {
        for key in obj.keys() {
            if let Some(p) = section_pass(key) {
                passes = passes.with(p);
            }
        }
    }
    let params: ClimateParams = serde_json::from_value(doc).with_context(|| format!("invalid climate {}", path.display()))?;
    params.validate()?;
    Ok((params, passes))
}

fn section_pass(section: &str) -> Option<Pass> {
    match section {
        "smog" => Some(Pass::Smog),
        "water" => Some(Pass::Flood),
        "snow" => Some(Pass::Snow),
        _ => None,
    }
}

pub fn parse_passes(s: &str) -> Result<Passes> {
    match s.trim() {
        "all" => return Ok(Passes::all()),
        "none" | "" => return Ok(Passes::none()),
        _ => {}
    }
    s.split(',').map(str::trim).try_fold(Passes::none(), |acc, name| {
        Pass::parse(name).map(|p| acc.with(p)).ok_or_else(|| anyhow!("unknown pass `{name}`"))
    })
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum CameraDoc {
    Poses(Vec<CameraSpec>),
    Orbit { orbit: CameraSpec, frames: usize },
    Single(CameraSpec),
}

/// Poses named by `--camera` (inline JSON or a file), or an overview of
/// `scene` when absent, all at `resolution` when given.
pub fn load_poses(camera: Option<&str>, scene: &GaussianScene, resolution: Option<(u32, u32)>) -> Result<Vec<CameraSpec>> {
    let poses = match camera {
        None => vec![CameraSpec::overview(&scene.bounds())],
        Some(arg) => {
            let trimmed = arg.trim_start();
            let text = if trimmed.starts_with('{') || trimmed.starts_with('[') {
                arg.to_string()
            } else {
                std::fs::read_to_string(arg).with_context(|| format!("reading camera {arg}"))?
            };
            let doc: CameraDoc = serde_json::from_str(&text).or_else(|_| {
                // the untagged error names no variant; report the single-pose one
                serde_json::from_str::<CameraSpec>(&text).map(CameraDoc::Single).context("invalid camera document")
            })?;
            match doc {
                CameraDoc::Poses(p) => p,
                CameraDoc::Orbit { orbit, frames } => {
                    ensure!(frames > 0, "orbit frames must be > 0");
                    orbit_path(&orbit, frames)?
                }
                CameraDoc::Single(s) => vec![s],
            }
        }
    };
    ensure!(!poses.is_empty(), "camera document lists no poses");
    let poses: Vec<CameraSpec> = match resolution {
        Some((w, h)) => poses.iter().map(|p| p.with_resolution(w, h)).collect(),
        None => poses,
    };
    for (i, p) in poses.iter().enumerate() {
        p.build().with_context(|| format!("camera pose {i}"))?;
    }
    Ok(poses)
}

/// A one-parameter sweep over a numeric climate field.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: String,
    /// Values as written, used in file names.
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn parse(s: &str) -> Result<Self> {
        let (param, list) = s.split_once('=').ok_or_else(|| anyhow!("sweep `{s}` is not <param>=<v1>,<v2>,..."))?;
        let param = param.trim().to_string();
        ensure!(!param.is_empty(), "sweep parameter name is empty");
        let labels: Vec<String> = list.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        ensure!(!labels.is_empty(), "sweep `{param}` has no values");
        let values = labels
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| anyhow!("sweep value `{v}` is not a number")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep { param, labels, values })
    }

    /// The pass that makes the swept field visible.
    pub fn pass(&self) -> Option<Pass> {
        section_pass(self.param.split('.').next().unwrap_or_default())
    }
}

/// `climate` with the numeric field at dotted `param` (array entries by
/// index) set to `value`.
pub fn set_param(climate: &ClimateParams, param: &str, value: f64) -> Result<ClimateParams> {
    let mut doc = serde_json::to_value(climate)?;
    let mut node = &mut doc;
    for seg in param.split('.') {
        node = match node {
            Value::Object(m) => m.get_mut(seg),
            Value::Array(a) => seg.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| anyhow!("unknown climate parameter `{param}`"))?;
    }
    if !node.is_number() {
        bail!("climate parameter `{param}` is not a number");
    }
    *node = serde_json::Number::from_f64(value).map(Value::Number).ok_or_else(|| anyhow!("sweep value {value} is not finite"))?;
    let params: ClimateParams = serde_json::from_value(doc)?;
    params.validate()?;
    Ok(params)
}
