//! Tile-based forward splatting: EWA projection, per-tile depth-ordered splat
//! lists and front-to-back alpha compositing.

mod framebuffer;

use nalgebra::{Matrix2, Matrix2x3, Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

pub use framebuffer::{FrameBuffer, PixelSample, SnowGBuffer, SKY_ALPHA};

use crate::climate::snow::sample_normal;
use crate::scene::sh::eval_sh_unchecked;
use crate::scene::{Camera, GaussianScene, SceneError, SplatKind};

pub const TILE_SIZE: u32 = 16;
/// Added to the diagonal of every screen-space covariance (px²).
pub const COV2D_DILATION: f64 = 0.3;
/// Splats whose undilated 3σ footprint is smaller than this (px) are dropped.
pub const MIN_EXTENT_PX: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.99;
/// Per-pixel contributions below this opacity are skipped.
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
/// Splats are clamped to this multiple of the half field of view when building
/// the projection Jacobian.
const FRUSTUM_GUARD: f64 = 1.3;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("invalid render options: {0}")]
    Options(String),
    #[error("frame buffer is missing its {0} buffer")]
    MissingBuffer(&'static str),
    #[error("per-pixel samples were not retained; render with keep_samples")]
    SamplesNotRetained,
    #[error("pixel ({0}, {1}) outside the frame")]
    OutOfBounds(u32, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub background: Vector3<f64>,
    /// Compositing stops once transmittance falls below this.
    pub transmittance_cutoff: f64,
    pub keep_samples: bool,
    /// Evaluate SH up to this degree instead of the scene's.
    pub sh_degree: Option<u8>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { background: Vector3::zeros(), transmittance_cutoff: 1e-4, keep_samples: false, sh_degree: None }
    }
}

impl RenderOptions {
    pub fn validate(&self) -> Result<(), RasterError> {
        if !(self.transmittance_cutoff > 0.0 && self.transmittance_cutoff < 1.0) {
            return Err(RasterError::Options(format!(
                "transmittance_cutoff {} outside (0, 1)",
                self.transmittance_cutoff
            )));
        }
        if !self.background.iter().all(|c| c.is_finite()) {
            return Err(RasterError::Options("non-finite background".into()));
        }
        Ok(())
    }
}

/// A Gaussian projected to the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedSplat {
    pub mean2d: Vector2<f64>,
    /// Dilated screen-space covariance (px²).
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub view_center: Vector3<f64>,
    pub view_depth: f64,
    pub color: Vector3<f64>,
    pub opacity: f64,
    pub source_index: usize,
    pub kind: SplatKind,
    /// 3σ radius of the dilated footprint (px).
    pub radius: f64,
}

impl ProjectedSplat {
    /// Evaluated opacity at continuous pixel position `p`, before clamping.
    pub fn falloff(&self, p: &Vector2<f64>) -> f64 {
        let d = p - self.mean2d;
        (-0.5 * (d.transpose() * self.conic * d)[(0, 0)]).exp()
    }
}

/// Projects, culls and depth-sorts every Gaussian for `camera`.
pub fn project(scene: &GaussianScene, camera: &Camera) -> Vec<ProjectedSplat> {
    project_with_degree(scene, camera, scene.sh_degree())
}

pub fn project_with_degree(scene: &GaussianScene, camera: &Camera, degree: u8) -> Vec<ProjectedSplat> {
    let cam_center = camera.center();
    let w = camera.rotation;
    let tan_x = 0.5 * camera.width as f64 / camera.focal.x;
    let tan_y = 0.5 * camera.height as f64 / camera.focal.y;
    let (width, height) = (camera.width as f64, camera.height as f64);

    let mut splats: Vec<ProjectedSplat> = scene
        .gaussians()
        .par_iter()
        .enumerate()
        .filter_map(|(index, g)| {
            let t = camera.world_to_view(&g.center);
            if !(t.z > camera.near && t.z < camera.far) {
                return None;
            }
            let lim_x = FRUSTUM_GUARD * tan_x;
            let lim_y = FRUSTUM_GUARD * tan_y;
            let tx = (t.x / t.z).clamp(-lim_x, lim_x) * t.z;
            let ty = (t.y / t.z).clamp(-lim_y, lim_y) * t.z;
            let (fx, fy) = (camera.focal.x, camera.focal.y);
            let j = Matrix2x3::new(fx / t.z, 0.0, -fx * tx / (t.z * t.z), 0.0, fy / t.z, -fy * ty / (t.z * t.z));
            let m = j * w;
            let raw = m * g.covariance() * m.transpose();
            let raw = (raw + raw.transpose()) * 0.5;
            if 3.0 * max_eigenvalue(&raw).max(0.0).sqrt() < MIN_EXTENT_PX {
                return None;
            }
            let cov2d = raw + Matrix2::identity() * COV2D_DILATION;
            let conic = cov2d.try_inverse().filter(|_| cov2d.determinant() > 0.0)?;
            let radius = 3.0 * max_eigenvalue(&cov2d).sqrt();
            let mean2d = camera.project_view(&t);
            if mean2d.x + radius < 0.0 || mean2d.x - radius > width || mean2d.y + radius < 0.0 || mean2d.y - radius > height {
                return None;
            }
            let color = match g.kind {
                SplatKind::Radiance => {
                    let dir = (g.center - cam_center).normalize();
                    eval_sh_unchecked(&g.sh, &dir, degree)
                }
                SplatKind::Snow => Vector3::zeros(),
            };
            Some(ProjectedSplat {
                mean2d,
                cov2d,
                conic,
                view_center: t,
                view_depth: t.z,
                color,
                opacity: g.opacity,
                source_index: index,
                kind: g.kind,
                radius,
            })
        })
        .collect();
    // collect() keeps scene order, so the stable sort is deterministic
    splats.sort_by(|a, b| a.view_depth.total_cmp(&b.view_depth));
    splats
}

fn max_eigenvalue(m: &Matrix2<f64>) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

struct TileGrid {
    tiles_x: u32,
    tiles_y: u32,
    lists: Vec<Vec<u32>>,
}

fn bin_splats(splats: &[ProjectedSplat], width: u32, height: u32) -> TileGrid {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    let ts = TILE_SIZE as f64;
    for (i, s) in splats.iter().enumerate() {
        let x0 = ((s.mean2d.x - s.radius) / ts).floor().max(0.0) as u32;
        let y0 = ((s.mean2d.y - s.radius) / ts).floor().max(0.0) as u32;
        let x1 = (((s.mean2d.x + s.radius) / ts).floor().max(0.0) as u32).min(tiles_x - 1);
        let y1 = (((s.mean2d.y + s.radius) / ts).floor().max(0.0) as u32).min(tiles_y - 1);
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                lists[(ty * tiles_x + tx) as usize].push(i as u32);
            }
        }
    }
    TileGrid { tiles_x, tiles_y, lists }
}

struct PixelOut {
    color: Vector3<f64>,
    depth: f64,
    alpha: f64,
    samples: Vec<PixelSample>,
    snow_weight: f64,
    snow_normal: Vector3<f64>,
}

fn composite_pixel(
    splats: &[ProjectedSplat],
    list: &[u32],
    px: Vector2<f64>,
    camera: &Camera,
    opts: &RenderOptions,
) -> PixelOut {
    let mut t = 1.0;
    let mut out = PixelOut {
        color: Vector3::zeros(),
        depth: 0.0,
        alpha: 0.0,
        samples: Vec::new(),
        snow_weight: 0.0,
        snow_normal: Vector3::zeros(),
    };
    for &i in list {
        let s = &splats[i as usize];
        let alpha = (s.opacity * s.falloff(&px)).min(MAX_ALPHA);
        if alpha < MIN_ALPHA {
            continue;
        }
        let w = alpha * t;
        match s.kind {
            SplatKind::Radiance => out.color += s.color * w,
            SplatKind::Snow => {
                out.snow_weight += w;
                out.snow_normal += sample_normal(s, px, camera) * w;
            }
        }
        out.depth += w * s.view_depth;
        if opts.keep_samples {
            out.samples.push(PixelSample { depth: s.view_depth, alpha });
        }
        t *= 1.0 - alpha;
        if t < opts.transmittance_cutoff {
            break;
        }
    }
    out.color += opts.background * t;
    out.alpha = 1.0 - t;
    out
}

/// Renders color, depth, coverage and (optionally) per-pixel sample lists.
pub fn rasterize(scene: &GaussianScene, camera: &Camera, opts: &RenderOptions) -> Result<FrameBuffer, RasterError> {
    camera.validate()?;
    opts.validate()?;
    let degree = opts.sh_degree.unwrap_or(scene.sh_degree()).min(crate::scene::sh::MAX_SH_DEGREE);
    let splats = project_with_degree(scene, camera, degree);
    Ok(rasterize_projected(&splats, camera, opts))
}

/// Composites already projected, depth-sorted splats.
pub fn rasterize_projected(splats: &[ProjectedSplat], camera: &Camera, opts: &RenderOptions) -> FrameBuffer {
    let (width, height) = (camera.width, camera.height);
    let grid = bin_splats(splats, width, height);
    let has_snow = splats.iter().any(|s| s.kind == SplatKind::Snow);

    let tiles: Vec<(u32, u32, Vec<PixelOut>)> = (0..grid.tiles_x * grid.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let (tx, ty) = (tile % grid.tiles_x, tile / grid.tiles_x);
            let list = &grid.lists[tile as usize];
            let x0 = tx * TILE_SIZE;
            let y0 = ty * TILE_SIZE;
            let mut pixels = Vec::with_capacity((TILE_SIZE * TILE_SIZE) as usize);
            for y in y0..(y0 + TILE_SIZE).min(height) {
                for x in x0..(x0 + TILE_SIZE).min(width) {
                    let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    pixels.push(composite_pixel(splats, list, px, camera, opts));
                }
            }
            (x0, y0, pixels)
        })
        .collect();

    let mut fb = FrameBuffer::new(width, height, opts.background);
    let n = fb.len();
    let mut samples = opts.keep_samples.then(|| vec![Vec::new(); n]);
    let mut snow = has_snow.then(|| SnowGBuffer { weight: vec![0.0; n], normal: vec![Vector3::zeros(); n] });
    for (x0, y0, pixels) in tiles {
        let tw = (x0 + TILE_SIZE).min(width) - x0;
        for (k, p) in pixels.into_iter().enumerate() {
            let (x, y) = (x0 + k as u32 % tw, y0 + k as u32 / tw);
            let i = fb.index(x, y);
            fb.color[i] = p.color;
            fb.depth[i] = p.depth;
            fb.alpha_acc[i] = p.alpha;
            if let Some(s) = samples.as_mut() {
                s[i] = p.samples;
            }
            if let Some(g) = snow.as_mut() {
                g.weight[i] = p.snow_weight;
                g.normal[i] = p.snow_normal;
            }
        }
    }
    fb.samples = samples;
    fb.snow = snow;
    fb
}

/// Ordered (depth, evaluated alpha) list for one pixel.
pub fn pixel_samples(fb: &FrameBuffer, x: u32, y: u32) -> Result<&[PixelSample], RasterError> {
    fb.pixel_samples(x, y)
}
