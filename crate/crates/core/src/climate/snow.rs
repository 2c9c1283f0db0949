//! Snow cover: placement of flat snow Gaussians on upward-facing surfaces by
//! parallel ray casting, per-pixel normal sampling on splats, and a deferred
//! wrap-lit shading pass.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gumbel::gumbel_fit;
use super::ClimateError;
use crate::raster::{FrameBuffer, PixelSample, ProjectedSplat, MAX_ALPHA, MIN_ALPHA};
use crate::scene::sh::ShCoeffs;
use crate::scene::synthetic::tangent_frame;
use crate::scene::{Camera, Gaussian, GaussianScene, SceneError, SplatKind};

/// Snow footprint relative to the lattice spacing.
pub const FOOTPRINT: f64 = 0.75;
pub const SNOW_OPACITY: f64 = 0.95;
/// Rays whose surface cluster is lighter than this are left bare.
pub const MIN_CLUSTER_WEIGHT: f64 = 0.5;
/// Ray/splat overlap extent in standard deviations.
const EXTENT_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnowParams {
    pub thickness: f64,
    pub grid_spacing: f64,
    /// Unit vector against gravity.
    pub up: [f64; 3],
    /// Surfaces whose normal·up falls below this stay bare.
    pub min_up_dot: f64,
    pub albedo: [f64; 3],
    pub wrap: f64,
    /// Unit vector toward the light.
    pub light_dir: [f64; 3],
}

impl Default for SnowParams {
    fn default() -> Self {
        SnowParams {
            thickness: 0.1,
            grid_spacing: 0.25,
            up: [0.0, 1.0, 0.0],
            min_up_dot: 0.7,
            albedo: [0.92, 0.93, 0.96],
            wrap: 0.5,
            light_dir: [0.48, 0.8, 0.36],
        }
    }
}

fn is_unit(v: &[f64; 3]) -> bool {
    (Vector3::from(*v).norm() - 1.0).abs() <= 1e-6
}

impl SnowParams {
    pub fn validate(&self) -> Result<(), ClimateError> {
        if !(self.thickness >= 0.0 && self.thickness.is_finite()) {
            return Err(ClimateError::field("snow.thickness", "must be a finite value >= 0"));
        }
        if !(self.grid_spacing > 0.0 && self.grid_spacing.is_finite()) {
            return Err(ClimateError::field("snow.grid_spacing", "must be > 0"));
        }
        if !is_unit(&self.up) {
            return Err(ClimateError::field("snow.up", "must be a unit vector"));
        }
        if !(0.0..=1.0).contains(&self.min_up_dot) {
            return Err(ClimateError::field("snow.min_up_dot", "must lie in [0, 1]"));
        }
        if !self.albedo.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(ClimateError::field("snow.albedo", "components must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.wrap) {
            return Err(ClimateError::field("snow.wrap", "must lie in [0, 1]"));
        }
        if !is_unit(&self.light_dir) {
            return Err(ClimateError::field("snow.light_dir", "must be a unit vector"));
        }
        Ok(())
    }

    /// Key identifying a placement: equal for parameter sets that place the
    /// same snow Gaussians. Shading-only fields are ignored.
    pub fn placement_key(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for v in [self.thickness, self.grid_spacing, self.min_up_dot]
            .iter()
            .chain(&self.up)
            .chain(&self.albedo)
        {
            // -0.0 and 0.0 place identically
            (v + 0.0).to_bits().hash(&mut h);
        }
        h.finish()
    }
}

/// Counters from one placement run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlacementStats {
    pub rays: usize,
    pub placed: usize,
    pub missed: usize,
    pub too_light: usize,
    pub too_steep: usize,
}

/// Placed snow together with the surface each Gaussian rests on.
#[derive(Debug, Clone, PartialEq)]
pub struct SnowPlacement {
    pub gaussians: Vec<Gaussian>,
    /// Estimated surface point under each snow Gaussian.
    pub surface_points: Vec<Vector3<f64>>,
    pub stats: PlacementStats,
}

/// Ray lattice perpendicular to `up`, covering the scene bounds.
struct Lattice {
    up: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    a0: f64,
    b0: f64,
    na: usize,
    nb: usize,
    top: f64,
    spacing: f64,
}

impl Lattice {
    fn new(scene: &GaussianScene, up: Vector3<f64>, spacing: f64) -> Option<Self> {
        let bounds = scene.bounds();
        if bounds.is_empty() {
            return None;
        }
        let (e1, e2) = tangent_frame(&up);
        let (mut a, mut b, mut h) = ([f64::INFINITY, f64::NEG_INFINITY], [f64::INFINITY, f64::NEG_INFINITY], f64::NEG_INFINITY);
        for c in bounds.corners() {
            let (pa, pb) = (c.dot(&e1), c.dot(&e2));
            a = [a[0].min(pa), a[1].max(pa)];
            b = [b[0].min(pb), b[1].max(pb)];
            h = h.max(c.dot(&up));
        }
        // start above every splat, including its extent
        let reach = scene.gaussians().iter().map(|g| g.scale.amax()).fold(0.0, f64::max);
        let count = |lo: f64, hi: f64| ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
        Some(Lattice {
            up,
            e1,
            e2,
            a0: a[0],
            b0: b[0],
            na: count(a[0], a[1]),
            nb: count(b[0], b[1]),
            top: h + EXTENT_SIGMA * reach + 1.0,
            spacing,
        })
    }

    fn len(&self) -> usize {
        self.na * self.nb
    }

    fn origin(&self, ray: usize) -> Vector3<f64> {
        let (i, j) = (ray % self.na, ray / self.na);
        self.e1 * (self.a0 + i as f64 * self.spacing) + self.e2 * (self.b0 + j as f64 * self.spacing) + self.up * self.top
    }

    /// Ray index range along one lattice axis covered by `[lo, hi]`.
    fn span(&self, origin: f64, n: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let first = ((lo - origin) / self.spacing).ceil().max(0.0);
        let last = ((hi - origin) / self.spacing).floor().min(n as f64 - 1.0);
        (first <= last).then_some((first as usize, last as usize))
    }

    /// Per-ray candidate lists: every Gaussian whose 3σ extent across the ray
    /// direction covers the ray.
    fn bin(&self, gaussians: &[Gaussian]) -> Vec<Vec<u32>> {
        let mut lists = vec![Vec::new(); self.len()];
        for (k, g) in gaussians.iter().enumerate() {
            let cov = g.covariance();
            let ext_a = EXTENT_SIGMA * self.e1.dot(&(cov * self.e1)).max(0.0).sqrt();
            let ext_b = EXTENT_SIGMA * self.e2.dot(&(cov * self.e2)).max(0.0).sqrt();
            let (ca, cb) = (g.center.dot(&self.e1), g.center.dot(&self.e2));
            let (Some((i0, i1)), Some((j0, j1))) =
                (self.span(self.a0, self.na, ca - ext_a, ca + ext_a), self.span(self.b0, self.nb, cb - ext_b, cb + ext_b))
            else {
                continue;
            };
            for j in j0..=j1 {
                for i in i0..=i1 {
                    lists[j * self.na + i].push(k as u32);
                }
            }
        }
        lists
    }
}

/// Closest approach of a ray to a Gaussian: ray parameter and evaluated opacity.
fn ray_splat(g: &Gaussian, inv_cov: &Matrix3<f64>, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
    let m = g.center - origin;
    let sd = inv_cov * dir;
    let dd = dir.dot(&sd);
    if dd <= 0.0 {
        return None;
    }
    let s = m.dot(&sd) / dd;
    let maha = (m.dot(&(inv_cov * m)) - s * s * dd).max(0.0);
    let alpha = (g.opacity * (-0.5 * maha).exp()).min(MAX_ALPHA);
    (alpha >= MIN_ALPHA && s > 0.0).then_some((s, alpha))
}

fn inverse_covariance(g: &Gaussian) -> Matrix3<f64> {
    let r = g.rotation.to_rotation_matrix().into_inner();
    let inv_s2 = Matrix3::from_diagonal(&g.scale.map(|s| 1.0 / (s * s)));
    r * inv_s2 * r.transpose()
}

enum RayOutcome {
    Miss,
    Light,
    Steep,
    Surface(Vector3<f64>),
}

fn cast(lattice: &Lattice, ray: usize, candidates: &[u32], gaussians: &[Gaussian], inv: &[Matrix3<f64>], min_up_dot: f64) -> RayOutcome {
    let origin = lattice.origin(ray);
    let dir = -lattice.up;
    let mut hits: Vec<(f64, f64, u32)> = candidates
        .iter()
        .filter_map(|&k| ray_splat(&gaussians[k as usize], &inv[k as usize], &origin, &dir).map(|(s, a)| (s, a, k)))
        .collect();
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.2.cmp(&y.2)));
    let samples: Vec<PixelSample> = hits.iter().map(|&(depth, alpha, _)| PixelSample { depth, alpha }).collect();
    let Some(fit) = gumbel_fit(&samples) else {
        return RayOutcome::Miss;
    };
    if fit.weight < MIN_CLUSTER_WEIGHT {
        return RayOutcome::Light;
    }
    // weighted mean covariance of the cluster; its shortest axis is the normal
    let mut t = 1.0;
    let mut cov = Matrix3::zeros();
    for (idx, &(_, alpha, k)) in hits.iter().enumerate() {
        if idx >= fit.first && idx <= fit.last {
            cov += gaussians[k as usize].covariance() * (alpha * t);
        }
        t *= 1.0 - alpha;
    }
    let eig = SymmetricEigen::new(cov);
    let normal = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    if normal.dot(&lattice.up).abs() < min_up_dot {
        return RayOutcome::Steep;
    }
    RayOutcome::Surface(origin + dir * fit.depth)
}

/// Casts parallel rays against `up` on a `grid_spacing` lattice over the scene
/// bounds and places one snow Gaussian per upward-facing surface hit. Output
/// order is row-major over the lattice.
pub fn place_snow(scene: &GaussianScene, s: &SnowParams) -> Result<SnowPlacement, ClimateError> {
    s.validate()?;
    let empty = SnowPlacement { gaussians: Vec::new(), surface_points: Vec::new(), stats: PlacementStats::default() };
    if s.thickness == 0.0 {
        return Ok(empty);
    }
    let up = Vector3::from(s.up).normalize();
    // snow is placed on the original surfaces only
    let gaussians: Vec<Gaussian> = scene.gaussians().iter().filter(|g| g.kind == SplatKind::Radiance).cloned().collect();
    let source = GaussianScene::new(gaussians, scene.sh_degree()).map_err(crate::raster::RasterError::from)?;
    let Some(lattice) = Lattice::new(&source, up, s.grid_spacing) else {
        return Ok(empty);
    };
    let gaussians = source.gaussians();
    let inv: Vec<Matrix3<f64>> = gaussians.par_iter().map(inverse_covariance).collect();
    let lists = lattice.bin(gaussians);

    let outcomes: Vec<RayOutcome> =
        (0..lattice.len()).into_par_iter().map(|r| cast(&lattice, r, &lists[r], gaussians, &inv, s.min_up_dot)).collect();

    let frame = Matrix3::from_columns(&[lattice.e1, up, lattice.e1.cross(&up)]);
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(frame));
    let half = 0.5 * s.thickness;
    let scale = Vector3::new(FOOTPRINT * s.grid_spacing, half, FOOTPRINT * s.grid_spacing);
    let sh = ShCoeffs::from_base_color(Vector3::from(s.albedo));

    let mut out = empty;
    out.stats.rays = lattice.len();
    for o in outcomes {
        match o {
            RayOutcome::Miss => out.stats.missed += 1,
            RayOutcome::Light => out.stats.too_light += 1,
            RayOutcome::Steep => out.stats.too_steep += 1,
            RayOutcome::Surface(p) => {
                out.gaussians.push(Gaussian { center: p + up * half, rotation, scale, opacity: SNOW_OPACITY, sh: sh.clone(), kind: SplatKind::Snow });
                out.surface_points.push(p);
            }
        }
    }
    out.stats.placed = out.gaussians.len();
    Ok(out)
}

/// Scene with placed snow appended. Thickness zero returns the scene unchanged.
pub fn apply_snow(scene: &GaussianScene, s: &SnowParams) -> Result<GaussianScene, ClimateError> {
    let placed = place_snow(scene, s)?;
    extend_with_snow(scene, placed.gaussians)
}

pub fn extend_with_snow(scene: &GaussianScene, snow: Vec<Gaussian>) -> Result<GaussianScene, ClimateError> {
    if snow.is_empty() {
        return Ok(scene.clone());
    }
    scene.extended(snow).map_err(|e: SceneError| ClimateError::Raster(e.into()))
}

/// Normal of the splat's ellipsoid under the pixel, treating the splat as a
/// sphere seen through its screen-space footprint. World space, unit length.
pub fn sample_normal(splat: &ProjectedSplat, pixel: Vector2<f64>, camera: &Camera) -> Vector3<f64> {
    let n1 = Vector3::new(0.0, 0.0, -1.0);
    let to_cam = -splat.view_center;
    let n2 = if to_cam.norm() > 0.0 { to_cam.normalize() } else { n1 };
    let fallback = camera.view_to_world_dir(&n2);

    let delta = pixel - splat.mean2d;
    let maha2 = (delta.transpose() * splat.conic * delta)[(0, 0)];
    if !maha2.is_finite() || splat.conic.determinant() <= 0.0 {
        return fallback;
    }
    let dist = maha2.max(0.0).sqrt().min(1.0);
    if dist == 0.0 || delta.norm() == 0.0 {
        return fallback;
    }
    let d = Vector3::new(delta.x, delta.y, 0.0).normalize();
    // slide d along the optical axis into the plane facing the camera
    let d_proj = d - n1 * (d.dot(&n2) / n1.dot(&n2));
    let Some(d_proj) = d_proj.try_normalize(1e-12) else {
        return fallback;
    };
    let n = d_proj * dist + n2 * (1.0 - dist * dist).sqrt();
    camera.view_to_world_dir(&n.normalize())
}

/// Diffuse term with a softened terminator.
pub fn wrap_diffuse(n: &Vector3<f64>, l: &Vector3<f64>, wrap: f64) -> f64 {
    ((n.dot(l) + wrap) / (1.0 + wrap)).max(0.0)
}

/// Lights the snow recorded during compositing and adds it to the frame.
/// Frames without snow splats are returned unchanged.
pub fn shade_snow(fb: &FrameBuffer, s: &SnowParams) -> Result<FrameBuffer, ClimateError> {
    s.validate()?;
    let mut out = fb.clone();
    let Some(g) = fb.snow.as_ref() else {
        return Ok(out);
    };
    if g.weight.len() != fb.len() || g.normal.len() != fb.len() {
        return Err(ClimateError::Mismatch("snow buffer size differs from the frame".into()));
    }
    let albedo = Vector3::from(s.albedo);
    let light = Vector3::from(s.light_dir).normalize();
    out.color.par_iter_mut().enumerate().for_each(|(i, c)| {
        let w = g.weight[i];
        if w <= 0.0 {
            return;
        }
        if let Some(n) = g.normal[i].try_normalize(1e-12) {
            *c += albedo * (w * wrap_diffuse(&n, &light, s.wrap));
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{project, rasterize, RenderOptions};
    use crate::scene::synthetic::{generate_synthetic_scene, horizontal_plane, Primitive, SyntheticSpec};
    use nalgebra::Matrix2;

    fn plane_scene(extra: Vec<Primitive>) -> GaussianScene {
        let mut primitives = vec![horizontal_plane(0.0, 5.0, 0.25, [0.4, 0.5, 0.3])];
        primitives.extend(extra);
        generate_synthetic_scene(&SyntheticSpec { primitives, seed: 3 }).unwrap().scene
    }

    fn params(thickness: f64, spacing: f64) -> SnowParams {
        SnowParams { thickness, grid_spacing: spacing, ..Default::default() }
    }

    #[test]
    fn plane_gets_full_lattice_at_plane_height() {
        let scene = plane_scene(vec![]);
        let placed = place_snow(&scene, &params(0.1, 0.5)).unwrap();
        assert_eq!(placed.stats.rays, 21 * 21);
        assert_eq!(placed.gaussians.len(), 21 * 21);
        for g in &placed.gaussians {
            assert!((g.center.y - 0.05).abs() < 1e-2, "center {}", g.center);
            assert_eq!(g.kind, SplatKind::Snow);
            assert_eq!(g.opacity, SNOW_OPACITY);
            g.validate().unwrap();
            // local y is up, with half the thickness
            let axis_y = g.rotation * Vector3::y();
            assert!((axis_y - Vector3::y()).amax() < 1e-9);
            assert!((g.scale - Vector3::new(0.375, 0.05, 0.375)).amax() < 1e-12);
        }
    }

    #[test]
    fn thickness_zero_places_nothing() {
        let scene = plane_scene(vec![]);
        assert!(place_snow(&scene, &params(0.0, 0.5)).unwrap().gaussians.is_empty());
        assert_eq!(apply_snow(&scene, &params(0.0, 0.5)).unwrap(), scene);
    }

    #[test]
    fn vertical_wall_stays_bare() {
        let wall = Primitive::Plane {
            center: [0.0, 2.0, 0.0],
            normal: [1.0, 0.0, 0.0],
            half_extent: [2.0, 2.0],
            spacing: 0.2,
            color: [0.5; 3],
            opacity: 0.99,
        };
        let scene = generate_synthetic_scene(&SyntheticSpec { primitives: vec![wall], seed: 0 }).unwrap().scene;
        let placed = place_snow(&scene, &params(0.1, 0.1)).unwrap();
        assert!(placed.gaussians.is_empty());
        assert!(placed.stats.too_steep > 0);
    }

    #[test]
    fn floaters_do_not_lift_snow() {
        let floaters = Primitive::Floaters {
            min: [-4.0, 1.0, -4.0],
            max: [4.0, 3.0, 4.0],
            count: 60,
            radius: 0.3,
            opacity: 0.3,
            color: [0.9; 3],
        };
        let scene = plane_scene(vec![floaters]);
        let placed = place_snow(&scene, &params(0.1, 0.5)).unwrap();
        let st = placed.stats;
        // rays behind stacked floaters can lose too much transmittance to place anything
        assert_eq!(st.rays, 21 * 21);
        assert_eq!(st.placed + st.too_light, st.rays);
        assert!(st.placed * 100 >= st.rays * 95, "{st:?}");
        for g in &placed.gaussians {
            assert!((g.center.y - 0.05).abs() <= 0.05);
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let scene = plane_scene(vec![]);
        let a = place_snow(&scene, &params(0.2, 0.4)).unwrap();
        let b = place_snow(&scene, &params(0.2, 0.4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn placement_key_tracks_placement_fields() {
        let a = params(0.1, 0.5);
        let mut b = a.clone();
        b.wrap = 0.9;
        b.light_dir = [0.0, 1.0, 0.0];
        assert_eq!(a.placement_key(), b.placement_key());
        assert_ne!(a.placement_key(), params(0.2, 0.5).placement_key());
        assert_ne!(a.placement_key(), params(0.1, 0.4).placement_key());
    }

    #[test]
    fn validation_names_fields() {
        let cases: [(SnowParams, &str); 5] = [
            (SnowParams { thickness: -0.1, ..Default::default() }, "snow.thickness"),
            (SnowParams { grid_spacing: 0.0, ..Default::default() }, "snow.grid_spacing"),
            (SnowParams { up: [0.0, 2.0, 0.0], ..Default::default() }, "snow.up"),
            (SnowParams { wrap: 1.5, ..Default::default() }, "snow.wrap"),
            (SnowParams { light_dir: [0.0; 3], ..Default::default() }, "snow.light_dir"),
        ];
        for (p, field) in cases {
            assert_eq!(p.validate().unwrap_err().field_name(), Some(field));
        }
    }

    fn axis_camera(size: u32) -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            Vector2::new(100.0, 100.0),
            Vector2::new(size as f64 / 2.0, size as f64 / 2.0),
            size,
            size,
            0.01,
            100.0,
        )
        .unwrap()
    }

    fn disk_splat(center: Vector3<f64>, mean2d: Vector2<f64>, sigma: f64) -> ProjectedSplat {
        let cov2d = Matrix2::identity() * (sigma * sigma);
        ProjectedSplat {
            mean2d,
            cov2d,
            conic: cov2d.try_inverse().unwrap(),
            view_center: center,
            view_depth: center.z,
            color: Vector3::zeros(),
            opacity: 1.0,
            source_index: 0,
            kind: SplatKind::Snow,
            radius: 3.0 * sigma,
        }
    }

    #[test]
    fn normal_at_center_faces_camera() {
        let cam = axis_camera(64);
        let s = disk_splat(Vector3::new(0.3, -0.2, 5.0), Vector2::new(38.0, 28.0), 4.0);
        let n = sample_normal(&s, s.mean2d, &cam);
        assert!((n - (-s.view_center).normalize()).amax() < 1e-12);
    }

    #[test]
    fn silhouette_normal_is_perpendicular_to_view() {
        let cam = axis_camera(64);
        let s = disk_splat(Vector3::new(0.3, -0.2, 5.0), Vector2::new(38.0, 28.0), 4.0);
        let n2 = (-s.view_center).normalize();
        for k in 0..16 {
            let a = k as f64 * std::f64::consts::PI / 8.0;
            for r in [4.0, 6.0, 20.0] {
                let n = sample_normal(&s, s.mean2d + Vector2::new(a.cos(), a.sin()) * r, &cam);
                assert!(n.dot(&n2).abs() < 1e-6);
                assert!((n.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn disk_reproduces_sphere_normals() {
        // sphere normals under orthographic mapping: offset r (in radii) has
        // normal (r·u, -sqrt(1 - r²)) in view space
        let cam = axis_camera(64);
        let sigma = 10.0;
        let s = disk_splat(Vector3::new(0.0, 0.0, 5.0), Vector2::new(32.0, 32.0), sigma);
        let mut worst: f64 = 0.0;
        for y in 0..64 {
            for x in 0..64 {
                let px = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let off = (px - s.mean2d) / sigma;
                let r = off.norm();
                if r >= 1.0 || r == 0.0 {
                    continue;
                }
                let expected = Vector3::new(off.x, off.y, -(1.0 - r * r).sqrt());
                let n = sample_normal(&s, px, &cam);
                worst = worst.max(n.dot(&expected).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(worst < 1e-3, "worst {worst}");
    }

    #[test]
    fn degenerate_footprint_falls_back() {
        let cam = axis_camera(64);
        let mut s = disk_splat(Vector3::new(0.0, 0.0, 5.0), Vector2::new(32.0, 32.0), 4.0);
        s.conic = Matrix2::zeros();
        assert_eq!(sample_normal(&s, Vector2::new(40.0, 40.0), &cam), Vector3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn wrap_diffuse_table() {
        let n = Vector3::y();
        assert_eq!(wrap_diffuse(&n, &n, 0.3), 1.0);
        let l = Vector3::new((1.0f64 - 0.25).sqrt(), -0.5, 0.0);
        assert!(wrap_diffuse(&n, &l, 0.5).abs() < 1e-15);
        assert!((wrap_diffuse(&n, &Vector3::x(), 0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(wrap_diffuse(&n, &-n, 0.2), 0.0);
    }

    #[test]
    fn top_down_snow_is_lit_from_above() {
        let up = Vector3::y();
        let p = SnowParams { light_dir: [0.0, 1.0, 0.0], ..params(0.1, 0.5) };
        let scene = apply_snow(&plane_scene(vec![]), &p).unwrap();
        let cam = Camera::look_at(Vector3::new(0.0, 6.0, 0.0), Vector3::zeros(), Vector3::z(), 50.0, 64, 64).unwrap();
        let fb = rasterize(&scene, &cam, &RenderOptions::default()).unwrap();
        let shaded = shade_snow(&fb, &p).unwrap();
        let g = fb.snow.as_ref().unwrap();
        let albedo = Vector3::from(p.albedo);
        let floor = p.wrap / (1.0 + p.wrap);
        let (mut lit, mut up_sum, mut above) = (0, 0.0, 0);
        for i in 0..fb.len() {
            if g.weight[i] > 1e-3 {
                let per_weight = (shaded.color[i] - fb.color[i]) / g.weight[i];
                assert!(per_weight.min() >= -1e-12);
                assert!((per_weight - albedo).max() <= 1e-12);
                let nd = g.normal[i].normalize().dot(&up);
                up_sum += nd;
                if nd > 0.0 {
                    above += 1;
                    assert!((per_weight - albedo * floor).min() >= -1e-12);
                }
                lit += 1;
            }
        }
        // splats shade as soft bumps, so only the bulk of the sheet faces up
        assert!(lit > fb.len() / 2);
        assert!(above * 2 > lit, "{above} of {lit}");
        assert!(up_sum / lit as f64 > 0.15, "mean {}", up_sum / lit as f64);
    }

    #[test]
    fn single_splat_brightest_at_center() {
        let p = SnowParams { light_dir: [0.0, 1.0, 0.0], ..Default::default() };
        let snow = Gaussian {
            center: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
            scale: Vector3::new(0.5, 0.05, 0.5),
            opacity: 0.95,
            sh: ShCoeffs::from_base_color(Vector3::from(p.albedo)),
            kind: SplatKind::Snow,
        };
        let scene = GaussianScene::new(vec![snow], 0).unwrap();
        let cam = Camera::look_at(Vector3::new(0.0, 4.0, 0.0), Vector3::zeros(), Vector3::z(), 40.0, 33, 33).unwrap();
        let fb = rasterize(&scene, &cam, &RenderOptions::default()).unwrap();
        let g = fb.snow.as_ref().unwrap();
        let light = Vector3::y();
        let shade = |i: usize| wrap_diffuse(&g.normal[i].normalize(), &light, p.wrap);
        let center = fb.index(16, 16);
        for i in 0..fb.len() {
            if g.weight[i] > 1e-6 {
                assert!(shade(i) <= shade(center) + 1e-12);
            }
        }
        assert!(shade(center) > 0.999);
        let splats = project(&scene, &cam);
        assert_eq!(splats.len(), 1);
    }

    #[test]
    fn shading_without_snow_is_identity() {
        let scene = plane_scene(vec![]);
        let cam = Camera::look_at(Vector3::new(0.0, 5.0, -5.0), Vector3::zeros(), Vector3::y(), 50.0, 32, 32).unwrap();
        let fb = rasterize(&scene, &cam, &RenderOptions::default()).unwrap();
        assert!(fb.snow.is_none());
        assert_eq!(shade_snow(&fb, &SnowParams::default()).unwrap(), fb);
    }
}
