//! Procedural scenes built from analytic surfaces, with exact ray intersections
//! kept alongside the Gaussians so renders can be checked against ground truth.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sh::ShCoeffs;
use super::{Camera, Gaussian, GaussianScene, SceneError, SplatKind};

/// Ratio of the flat axis to the in-plane scale of surface splats.
const FLAT_RATIO: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Rectangle through `center` with unit `normal`, sampled on a square lattice.
    Plane {
        center: [f64; 3],
        normal: [f64; 3],
        half_extent: [f64; 2],
        spacing: f64,
        color: [f64; 3],
        opacity: f64,
    },
    /// Sphere surface sampled with a Fibonacci lattice.
    Sphere { center: [f64; 3], radius: f64, spacing: f64, color: [f64; 3], opacity: f64 },
    /// Closed axis-aligned box; six plane faces.
    Cuboid { min: [f64; 3], max: [f64; 3], spacing: f64, color: [f64; 3], opacity: f64 },
    /// Isotropic low-opacity blobs scattered uniformly inside a box. Not a surface.
    Floaters { min: [f64; 3], max: [f64; 3], count: usize, radius: f64, opacity: f64, color: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    Rect { center: Vector3<f64>, normal: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, half: [f64; 2] },
    Sphere { center: Vector3<f64>, radius: f64 },
}

impl Surface {
    /// Smallest positive ray parameter (with unit `dir`) hitting the surface.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Rect { center, normal, u, v, half } => {
                let denom = dir.dot(&normal);
                if denom.abs() < 1e-12 {
                    return None;
                }
                let t = (center - origin).dot(&normal) / denom;
                if t <= 0.0 {
                    return None;
                }
                let p = origin + dir * t - center;
                (p.dot(&u).abs() <= half[0] && p.dot(&v).abs() <= half[1]).then_some(t)
            }
            Surface::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > 0.0)
            }
        }
    }
}

/// A generated scene and the analytic surfaces it samples.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub scene: GaussianScene,
    pub surfaces: Vec<Surface>,
}

impl SyntheticScene {
    /// Distance along a unit ray to the nearest analytic surface.
    pub fn ray_distance(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.surfaces.iter().filter_map(|s| s.intersect(origin, dir)).min_by(|a, b| a.total_cmp(b))
    }

    /// Ground-truth view depth for every pixel center, row-major.
    pub fn ground_truth_depths(&self, camera: &Camera) -> Vec<Option<f64>> {
        let mut out = Vec::with_capacity(camera.pixel_count());
        for y in 0..camera.height {
            for x in 0..camera.width {
                let (o, d) = camera.pixel_ray(x, y);
                out.push(self.ray_distance(&o, &d).map(|t| camera.world_to_view(&(o + d * t)).z));
            }
        }
        out
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Orthonormal tangent pair completing `n` to a right-handed frame.
pub fn tangent_frame(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    let v = n.cross(&u);
    (u, v)
}

fn surface_splat(center: Vector3<f64>, normal: &Vector3<f64>, size: f64, color: &Vector3<f64>, opacity: f64) -> Gaussian {
    let (u, v) = tangent_frame(normal);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, *normal]));
    Gaussian {
        center,
        rotation: UnitQuaternion::from_rotation_matrix(&rot),
        scale: Vector3::new(size, size, size * FLAT_RATIO),
        opacity,
        sh: ShCoeffs::from_base_color(*color),
        kind: SplatKind::Radiance,
    }
}

fn rect(
    center: Vector3<f64>,
    normal: Vector3<f64>,
    half: [f64; 2],
    spacing: f64,
    color: &Vector3<f64>,
    opacity: f64,
    out: &mut Vec<Gaussian>,
) -> Surface {
    let normal = normal.normalize();
    let (u, v) = tangent_frame(&normal);
    let nu = (half[0] / spacing).round().max(0.0) as i64;
    let nv = (half[1] / spacing).round().max(0.0) as i64;
    for i in -nu..=nu {
        for j in -nv..=nv {
            let p = center + u * (i as f64 * spacing) + v * (j as f64 * spacing);
            out.push(surface_splat(p, &normal, spacing, color, opacity));
        }
    }
    Surface::Rect { center, normal, u, v, half }
}

fn check_positive(name: &str, v: f64) -> Result<(), SceneError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SceneError::InvalidGaussian(format!("{name} must be positive, got {v}")))
    }
}

/// Builds the scene for `spec`. Deterministic for a given seed.
pub fn generate_synthetic_scene(spec: &SyntheticSpec) -> Result<SyntheticScene, SceneError> {
    if spec.primitives.is_empty() {
        return Err(SceneError::EmptySpec);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gaussians = Vec::new();
    let mut surfaces = Vec::new();
    for prim in &spec.primitives {
        match prim {
            Primitive::Plane { center, normal, half_extent, spacing, color, opacity } => {
                check_positive("spacing", *spacing)?;
                surfaces.push(rect(v3(*center), v3(*normal), *half_extent, *spacing, &v3(*color), *opacity, &mut gaussians));
            }
            Primitive::Sphere { center, radius, spacing, color, opacity } => {
                check_positive("spacing", *spacing)?;
                check_positive("radius", *radius)?;
                let c = v3(*center);
                let area = 4.0 * std::f64::consts::PI * radius * radius;
                let n = ((area / (spacing * spacing)).ceil() as usize).max(8);
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                for i in 0..n {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    let dir = Vector3::new(r * phi.cos(), r * phi.sin(), z);
                    gaussians.push(surface_splat(c + dir * *radius, &dir, *spacing, &v3(*color), *opacity));
                }
                surfaces.push(Surface::Sphere { center: c, radius: *radius });
            }
            Primitive::Cuboid { min, max, spacing, color, opacity } => {
                check_positive("spacing", *spacing)?;
                let (lo, hi) = (v3(*min), v3(*max));
                let mid = (lo + hi) * 0.5;
                let half = (hi - lo) * 0.5;
                for axis in 0..3 {
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    for sign in [-1.0, 1.0] {
                        let mut normal = Vector3::zeros();
                        normal[axis] = sign;
                        let center = mid + normal * half[axis];
                        // tangent_frame picks its own axes; map the extents onto them
                        let (u, _) = tangent_frame(&normal);
                        let (hu, hv) = if u[a].abs() > 0.5 { (half[a], half[b]) } else { (half[b], half[a]) };
                        surfaces.push(rect(center, normal, [hu, hv], *spacing, &v3(*color), *opacity, &mut gaussians));
                    }
                }
            }
            Primitive::Floaters { min, max, count, radius, opacity, color } => {
                check_positive("radius", *radius)?;
                let (lo, hi) = (v3(*min), v3(*max));
                for _ in 0..*count {
                    let p = Vector3::from_fn(|i, _| if hi[i] > lo[i] { rng.random_range(lo[i]..hi[i]) } else { lo[i] });
                    gaussians.push(Gaussian::isotropic(p, *radius, *opacity, v3(*color)));
                }
            }
        }
    }
    Ok(SyntheticScene { scene: GaussianScene::new(gaussians, 0)?, surfaces })
}

/// Square horizontal (+y up) plane centered at `height`, the standard test floor.
pub fn horizontal_plane(height: f64, half: f64, spacing: f64, color: [f64; 3]) -> Primitive {
    Primitive::Plane {
        center: [0.0, height, 0.0],
        normal: [0.0, 1.0, 0.0],
        half_extent: [half, half],
        spacing,
        color,
        opacity: 0.99,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_rejected() {
        let spec = SyntheticSpec { primitives: vec![], seed: 0 };
        assert!(matches!(generate_synthetic_scene(&spec), Err(SceneError::EmptySpec)));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = SyntheticSpec {
            primitives: vec![Primitive::Floaters {
                min: [0.0; 3],
                max: [1.0; 3],
                count: 20,
                radius: 0.1,
                opacity: 0.1,
                color: [1.0; 3],
            }],
            seed: 42,
        };
        let a = generate_synthetic_scene(&spec).unwrap();
        let b = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(a.scene, b.scene);
        let other = generate_synthetic_scene(&SyntheticSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.scene, other.scene);
    }

    #[test]
    fn plane_in_view_space_has_constant_depth() {
        // camera at origin looking down +z, plane z = 5
        let spec = SyntheticSpec {
            primitives: vec![Primitive::Plane {
                center: [0.0, 0.0, 5.0],
                normal: [0.0, 0.0, -1.0],
                half_extent: [10.0, 10.0],
                spacing: 0.5,
                color: [0.5; 3],
                opacity: 0.99,
            }],
            seed: 0,
        };
        let syn = generate_synthetic_scene(&spec).unwrap();
        let cam = Camera::look_at(Vector3::zeros(), Vector3::z(), -Vector3::y(), 60.0, 16, 12).unwrap();
        let depths = syn.ground_truth_depths(&cam);
        assert!(depths.iter().all(|d| (d.unwrap() - 5.0).abs() < 1e-9));
        assert!(syn.scene.gaussians().iter().all(|g| (g.center.z - 5.0).abs() < 1e-12));
    }

    #[test]
    fn floaters_do_not_change_ground_truth() {
        let plane = Primitive::Plane {
            center: [0.0, 0.0, 5.0],
            normal: [0.0, 0.0, -1.0],
            half_extent: [10.0, 10.0],
            spacing: 0.5,
            color: [0.5; 3],
            opacity: 0.99,
        };
        let floaters = Primitive::Floaters {
            min: [-2.0, -2.0, 2.0],
            max: [2.0, 2.0, 2.0],
            count: 30,
            radius: 0.2,
            opacity: 0.1,
            color: [1.0; 3],
        };
        let syn = generate_synthetic_scene(&SyntheticSpec { primitives: vec![plane, floaters], seed: 1 }).unwrap();
        let cam = Camera::look_at(Vector3::zeros(), Vector3::z(), -Vector3::y(), 60.0, 16, 12).unwrap();
        assert!(syn.ground_truth_depths(&cam).iter().all(|d| (d.unwrap() - 5.0).abs() < 1e-9));
    }

    #[test]
    fn sphere_intersection_matches_closed_form() {
        let s = Surface::Sphere { center: Vector3::zeros(), radius: 1.0 };
        let t = s.intersect(&Vector3::new(0.0, 0.0, -5.0), &Vector3::z()).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        let off = Vector3::new(0.6, 0.0, -5.0);
        let t = s.intersect(&off, &Vector3::z()).unwrap();
        assert!((t - (5.0 - 0.8)).abs() < 1e-12);
        assert!(s.intersect(&Vector3::new(1.5, 0.0, -5.0), &Vector3::z()).is_none());
    }

    #[test]
    fn sphere_splats_lie_on_the_surface() {
        let spec = SyntheticSpec {
            primitives: vec![Primitive::Sphere { center: [1.0, 2.0, 3.0], radius: 1.5, spacing: 0.2, color: [0.5; 3], opacity: 0.9 }],
            seed: 0,
        };
        let syn = generate_synthetic_scene(&spec).unwrap();
        assert!(syn.scene.len() > 100);
        for g in syn.scene.gaussians() {
            assert!(((g.center - Vector3::new(1.0, 2.0, 3.0)).norm() - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn cuboid_has_six_faces() {
        let spec = SyntheticSpec {
            primitives: vec![Primitive::Cuboid { min: [-1.0, 0.0, -2.0], max: [1.0, 3.0, 2.0], spacing: 0.5, color: [0.4; 3], opacity: 0.99 }],
            seed: 0,
        };
        let syn = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(syn.surfaces.len(), 6);
        let t = syn.ray_distance(&Vector3::new(0.0, 1.0, -10.0), &Vector3::z()).unwrap();
        assert!((t - 8.0).abs() < 1e-12);
        let t = syn.ray_distance(&Vector3::new(0.3, 10.0, 0.7), &-Vector3::y()).unwrap();
        assert!((t - 7.0).abs() < 1e-12);
        let b = syn.scene.bounds();
        assert!((b.min - Vector3::new(-1.0, 0.0, -2.0)).amax() < 1e-9);
        assert!((b.max - Vector3::new(1.0, 3.0, 2.0)).amax() < 1e-9);
    }
}
