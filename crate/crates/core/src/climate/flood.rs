//! Water surface pass: wave-displaced plane, Schlick-weighted mix of a
//! screen-space reflection and an absorbed refraction of the submerged scene.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fresnel::schlick_fresnel;
use super::gerstner::{validate_waves, GerstnerWave, SurfacePatch, WaveField};
use super::ssr::{depth_lookup, ssr_trace_with, SsrOptions};
use super::ClimateError;
use crate::raster::FrameBuffer;
use crate::scene::synthetic::tangent_frame;
use crate::scene::Camera;

/// Iteration caps and step tolerance (world units) for intersecting a view ray
/// with the displaced surface.
const NEWTON_ITERATIONS: usize = 16;
const INVERSE_ITERATIONS: usize = 32;
const BRACKET_SAMPLES: usize = 64;
const SURFACE_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaterParams {
    /// A point on the rest plane.
    pub origin: [f64; 3],
    /// Rest plane normal, pointing out of the water.
    pub normal: [f64; 3],
    pub waves: Vec<GerstnerWave>,
    pub deep_color: [f64; 3],
    /// Multiplicative tint of light transmitted through the water.
    pub shallow_color: [f64; 3],
    pub ior: f64,
    /// Extinction per world unit of underwater path.
    pub absorption: [f64; 3],
}

impl Default for WaterParams {
    fn default() -> Self {
        WaterParams {
            origin: [0.0, 0.0, 0.0],
            normal: [0.0, 1.0, 0.0],
            waves: vec![
                GerstnerWave { direction: [1.0, 0.0], wavelength: 4.0, steepness: 0.25, phase_speed: None, phase0: 0.0 },
                GerstnerWave { direction: [0.6, 0.8], wavelength: 2.3, steepness: 0.2, phase_speed: None, phase0: 1.3 },
                GerstnerWave { direction: [-0.28, 0.96], wavelength: 1.1, steepness: 0.15, phase_speed: None, phase0: 2.1 },
            ],
            deep_color: [0.02, 0.11, 0.16],
            shallow_color: [0.85, 0.95, 1.0],
            ior: 1.33,
            absorption: [0.45, 0.12, 0.08],
        }
    }
}

impl WaterParams {
    pub fn validate(&self) -> Result<(), ClimateError> {
        let n = Vector3::from(self.normal);
        if (n.norm() - 1.0).abs() > 1e-6 {
            return Err(ClimateError::field("water.normal", "must be a unit vector"));
        }
        if !self.origin.iter().all(|v| v.is_finite()) {
            return Err(ClimateError::field("water.origin", "must be finite"));
        }
        if !(self.ior > 1.0 && self.ior.is_finite()) {
            return Err(ClimateError::field("water.ior", "must be > 1"));
        }
        if !self.absorption.iter().all(|a| *a >= 0.0 && a.is_finite()) {
            return Err(ClimateError::field("water.absorption", "components must be >= 0"));
        }
        for (name, c) in [("water.deep_color", &self.deep_color), ("water.shallow_color", &self.shallow_color)] {
            if !c.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(ClimateError::field(name, "components must lie in [0, 1]"));
            }
        }
        validate_waves(&self.waves)
    }
}

/// Plane-local frame: `x` along `e1`, `y` along the normal, `z` along `e2`.
#[derive(Debug, Clone, Copy)]
struct WaterFrame {
    origin: Vector3<f64>,
    normal: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
}

impl WaterFrame {
    fn new(w: &WaterParams) -> Self {
        let normal = Vector3::from(w.normal).normalize();
        let (e1, e2) = tangent_frame(&normal);
        WaterFrame { origin: Vector3::from(w.origin), normal, e1, e2 }
    }

    fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let d = p - self.origin;
        Vector3::new(d.dot(&self.e1), d.dot(&self.normal), d.dot(&self.e2))
    }

    fn dir_to_world(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.e1 * v.x + self.normal * v.y + self.e2 * v.z
    }
}

/// Where a view ray meets the displaced water surface.
#[derive(Debug, Clone, Copy)]
struct SurfaceHit {
    distance: f64,
    point: Vector3<f64>,
    /// Plane-local surface normal.
    normal: Vector3<f64>,
    /// Offset of the solution from the flat-plane hit, a starting guess for
    /// neighbouring rays.
    warm: (Vector2<f64>, f64),
}

fn intersect_surface(
    frame: &WaterFrame,
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    field: &WaveField,
    warm: Option<(Vector2<f64>, f64)>,
) -> Option<SurfaceHit> {
    let denom = dir.dot(&frame.normal);
    let o = frame.to_local(origin);
    // only rays travelling into the water from above
    if denom > -1e-9 || o.y <= 0.0 {
        return None;
    }
    let d = Vector3::new(dir.dot(&frame.e1), denom, dir.dot(&frame.e2));
    let flat = -o.y / denom;
    let start = Vector2::new(o.x + d.x * flat, o.z + d.z * flat);
    let solved = warm
        .and_then(|(dr, ds)| newton(&o, &d, field, start + dr, flat + ds))
        .or_else(|| newton(&o, &d, field, start, flat));
    let (rest, distance, patch) = solved.or_else(|| bracket(&o, &d, field))?;
    (distance > 0.0).then(|| SurfaceHit {
        distance,
        point: origin + dir * distance,
        normal: patch.normal(),
        warm: (rest - start, distance - flat),
    })
}

/// Rest position, ray distance and the surface patch there.
type Solution = (Vector2<f64>, f64, SurfacePatch);

/// Solves `rest + offset(rest) = o + d·s` for the rest position and `s` with
/// Newton steps, halved until the residual shrinks.
fn newton(o: &Vector3<f64>, d: &Vector3<f64>, field: &WaveField, mut rest: Vector2<f64>, mut s: f64) -> Option<Solution> {
    let residual = |rest: &Vector2<f64>, s: f64, p: &SurfacePatch| {
        Vector3::new(rest.x + p.offset.x, p.offset.y, rest.y + p.offset.z) - (o + d * s)
    };
    let mut p = field.patch(&rest);
    let mut f = residual(&rest, s, &p);
    for _ in 0..NEWTON_ITERATIONS {
        if f.amax() < SURFACE_TOLERANCE {
            return Some((rest, s, p));
        }
        let step = Matrix3::from_columns(&[p.dx, p.dz, -d]).lu().solve(&-f)?;
        let mut lambda = 1.0;
        loop {
            let r = rest + Vector2::new(step.x, step.y) * lambda;
            let sc = s + step.z * lambda;
            let pc = field.patch(&r);
            let fc = residual(&r, sc, &pc);
            if fc.amax() < SURFACE_TOLERANCE || fc.norm() < f.norm() || lambda < 1e-3 {
                (rest, s, p, f) = (r, sc, pc, fc);
                break;
            }
            lambda *= 0.5;
        }
    }
    (f.amax() < SURFACE_TOLERANCE).then_some((rest, s, p))
}

/// Height of `q` above the displaced surface, found by inverting the
/// horizontal displacement at `q`'s plane position.
fn height_above(q: &Vector3<f64>, field: &WaveField) -> (f64, Vector2<f64>) {
    let target = Vector2::new(q.x, q.z);
    let mut rest = target;
    for _ in 0..INVERSE_ITERATIONS {
        let p = field.patch(&rest);
        let f = rest + Vector2::new(p.offset.x, p.offset.z) - target;
        if f.amax() < SURFACE_TOLERANCE {
            break;
        }
        let j = nalgebra::Matrix2::new(p.dx.x, p.dz.x, p.dx.z, p.dz.z);
        match j.lu().solve(&-f) {
            Some(step) => rest += step,
            // folded crest: fall back to the contraction step
            None => rest -= f,
        }
    }
    (q.y - field.displace(&rest).y, rest)
}

/// Slower but robust alternative to [`newton`]: marches the ray between the
/// crest and trough planes for the first crossing, then bisects it.
fn bracket(o: &Vector3<f64>, d: &Vector3<f64>, field: &WaveField) -> Option<Solution> {
    let a = field.max_height();
    let s0 = ((a - o.y) / d.y).max(0.0);
    let s1 = (-a - o.y) / d.y;
    if s1 < s0 {
        return None;
    }
    let g = |s: f64| height_above(&(o + d * s), field);
    let (mut lo, mut hi) = (s0, s1);
    let mut prev = s0;
    for i in 1..=BRACKET_SAMPLES {
        let s = s0 + (s1 - s0) * i as f64 / BRACKET_SAMPLES as f64;
        if g(s).0 <= 0.0 {
            (lo, hi) = (prev, s);
            break;
        }
        prev = s;
    }
    while hi - lo > SURFACE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if g(mid).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rest = g(hi).1;
    Some((rest, hi, field.patch(&rest)))
}

fn refract(incident: &Vector3<f64>, normal: &Vector3<f64>, eta: f64) -> Option<Vector3<f64>> {
    let cos_i = -incident.dot(normal);
    let k = 1.0 - eta * eta * (1.0 - cos_i * cos_i);
    (k >= 0.0).then(|| incident * eta + normal * (eta * cos_i - k.sqrt()))
}

/// Reflection/refraction weights used at one water pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterWeights {
    pub reflect: f64,
    pub refract: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloodOutput {
    pub frame: FrameBuffer,
    /// Per pixel, the blend weights if the pixel was shaded as water.
    pub weights: Vec<Option<WaterWeights>>,
}

impl FloodOutput {
    pub fn water_pixels(&self) -> usize {
        self.weights.iter().filter(|w| w.is_some()).count()
    }
}

pub fn apply_flood(fb: &FrameBuffer, camera: &Camera, w: &WaterParams, t: f64) -> Result<FrameBuffer, ClimateError> {
    Ok(apply_flood_instrumented(fb, camera, w, t, &SsrOptions::default())?.frame)
}

/// Flood pass that also reports the blend weights of every water pixel.
pub fn apply_flood_instrumented(
    fb: &FrameBuffer,
    camera: &Camera,
    w: &WaterParams,
    t: f64,
    ssr: &SsrOptions,
) -> Result<FloodOutput, ClimateError> {
    fb.require_depth()?;
    w.validate()?;
    if fb.width != camera.width || fb.height != camera.height {
        return Err(ClimateError::Mismatch(format!(
            "frame is {}x{} but camera is {}x{}",
            fb.width, fb.height, camera.width, camera.height
        )));
    }
    let frame = WaterFrame::new(w);
    let field = WaveField::new(&w.waves, t);
    let depths = depth_lookup(fb);
    let shallow = Vector3::from(w.shallow_color);
    let deep = Vector3::from(w.deep_color);
    let absorption = Vector3::from(w.absorption);
    let width = fb.width;

    let shade = |i: usize, d: &Vector3<f64>, hit: &SurfaceHit| -> (Vector3<f64>, Option<WaterWeights>) {
        let input = fb.color[i];
        let hit_view = camera.world_to_view(&hit.point);
        if hit_view.z <= camera.near || depths[i] <= hit_view.z {
            return (input, None);
        }
        let n = frame.dir_to_world(&hit.normal);
        let cos = (-d.dot(&n)).clamp(0.0, 1.0);
        let r = schlick_fresnel(cos, w.ior);
        let weights = WaterWeights { reflect: r, refract: 1.0 - r };

        let reflected_dir = d - n * (2.0 * d.dot(&n));
        let reflection = ssr_trace_with(fb, &depths, camera, &hit_view, &camera.world_to_view_dir(&reflected_dir), ssr).color;

        // underwater path along the view ray, from the surface to the scene
        let d_view_z = camera.world_to_view_dir(&d).z;
        let path = if depths[i].is_finite() { (depths[i] / d_view_z - hit.distance).max(0.0) } else { f64::INFINITY };
        let mut sample = input;
        if path.is_finite() {
            if let Some(refr) = refract(&d, &n, 1.0 / w.ior) {
                let pv = camera.world_to_view(&(hit.point + refr * path));
                if pv.z > camera.near {
                    let px = camera.project_view(&pv);
                    if px.x >= 0.0 && px.y >= 0.0 && px.x < fb.width as f64 && px.y < fb.height as f64 {
                        let j = fb.index(px.x as u32, px.y as u32);
                        if depths[j] > hit_view.z {
                            sample = fb.color[j];
                        }
                    }
                }
            }
        }
        let transmit = (-absorption * path).map(f64::exp);
        let one = Vector3::repeat(1.0);
        let refraction = transmit.component_mul(&shallow).component_mul(&sample) + (one - transmit).component_mul(&deep);
        let color = reflection * weights.reflect + refraction * weights.refract;
        (color, Some(weights))
    };

    // rows run in parallel; along a row each ray starts from its neighbour's solution
    let shaded: Vec<(Vector3<f64>, Option<WaterWeights>)> = (0..fb.height)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut warm = None;
            (0..width)
                .map(|x| {
                    let i = fb.index(x, y);
                    let (o, d) = camera.pixel_ray(x, y);
                    let hit = intersect_surface(&frame, &o, &d, &field, warm);
                    warm = hit.map(|h| h.warm);
                    match hit {
                        Some(hit) => shade(i, &d, &hit),
                        None => (fb.color[i], None),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut out = fb.clone();
    let mut weights = Vec::with_capacity(shaded.len());
    for (i, (c, wt)) in shaded.into_iter().enumerate() {
        out.color[i] = c;
        weights.push(wt);
    }
    Ok(FloodOutput { frame: out, weights })
}
