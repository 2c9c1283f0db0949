use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{Aabb, SceneError};

/// Pinhole camera. View space has x right, y down and z forward, so the view
/// depth of a world point is `(rotation·p + translation).z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// World-to-view rotation.
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    pub focal: Vector2<f64>,
    pub principal_point: Vector2<f64>,
    pub width: u32,
    pub height: u32,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        focal: Vector2<f64>,
        principal_point: Vector2<f64>,
        width: u32,
        height: u32,
        near: f64,
        far: f64,
    ) -> Result<Self, SceneError> {
        let cam = Camera { rotation, translation, focal, principal_point, width, height, near, far };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, vertical field of view in degrees.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        fov_y_deg: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, SceneError> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(SceneError::InvalidCamera("eye and target coincide".into()));
        }
        let forward = forward.normalize();
        let right = forward.cross(&up);
        if right.norm() < 1e-9 {
            return Err(SceneError::InvalidCamera("up vector parallel to view direction".into()));
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        if !(fov_y_deg > 0.0 && fov_y_deg < 180.0) {
            return Err(SceneError::InvalidCamera(format!("fov {fov_y_deg} outside (0, 180)")));
        }
        let fy = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        Camera::new(
            rotation,
            -(rotation * eye),
            Vector2::new(fy, fy),
            Vector2::new(width as f64 * 0.5, height as f64 * 0.5),
            width,
            height,
            0.01,
            1000.0,
        )
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if !(err <= 1e-6) {
            return Err(SceneError::InvalidCamera(format!("rotation not orthonormal (error {err:e})")));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(SceneError::InvalidCamera("rotation is a reflection".into()));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(SceneError::InvalidCamera(format!("need 0 < near < far, got {} / {}", self.near, self.far)));
        }
        if self.width < 1 || self.height < 1 {
            return Err(SceneError::InvalidCamera("width and height must be at least 1".into()));
        }
        if !(self.focal.x > 0.0 && self.focal.y > 0.0) {
            return Err(SceneError::InvalidCamera("focal lengths must be positive".into()));
        }
        if !self.translation.iter().chain(self.principal_point.iter()).all(|v| v.is_finite()) {
            return Err(SceneError::InvalidCamera("non-finite parameters".into()));
        }
        Ok(())
    }

    /// Same pose and field of view at another resolution.
    pub fn with_resolution(&self, width: u32, height: u32) -> Camera {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Camera {
            focal: Vector2::new(self.focal.x * sx, self.focal.y * sy),
            principal_point: Vector2::new(self.principal_point.x * sx, self.principal_point.y * sy),
            width,
            height,
            ..self.clone()
        }
    }

    /// Camera position in world space.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_view(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn view_to_world_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * d
    }

    pub fn world_to_view_dir(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }

    /// Pixel coordinates of a view-space point (pixel centers at +0.5).
    pub fn project_view(&self, v: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.focal.x * v.x / v.z + self.principal_point.x,
            self.focal.y * v.y / v.z + self.principal_point.y,
        )
    }

    /// Unnormalized view-space direction through continuous pixel position `px`
    /// with z = 1.
    pub fn pixel_dir_view(&self, px: Vector2<f64>) -> Vector3<f64> {
        Vector3::new(
            (px.x - self.principal_point.x) / self.focal.x,
            (px.y - self.principal_point.y) / self.focal.y,
            1.0,
        )
    }

    /// World-space ray (origin, unit direction) through the center of pixel (x, y).
    pub fn pixel_ray(&self, x: u32, y: u32) -> (Vector3<f64>, Vector3<f64>) {
        let d = self.pixel_dir_view(Vector2::new(x as f64 + 0.5, y as f64 + 0.5));
        (self.center(), self.view_to_world_dir(&d).normalize())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

fn default_up() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn default_fov() -> f64 {
    50.0
}

fn default_width() -> u32 {
    640
}

fn default_height() -> u32 {
    360
}

/// A camera described by its pose, as written in documents and requests.
/// Angles are in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CameraSpec {
    LookAt {
        eye: [f64; 3],
        target: [f64; 3],
        #[serde(default = "default_up")]
        up: [f64; 3],
        #[serde(default = "default_fov")]
        fov_y: f64,
        #[serde(default = "default_width")]
        width: u32,
        #[serde(default = "default_height")]
        height: u32,
    },
    /// On a sphere around `target` with +y up: azimuth is measured about +y
    /// from +z, elevation above the horizontal plane.
    Orbit {
        target: [f64; 3],
        radius: f64,
        #[serde(default)]
        azimuth: f64,
        #[serde(default)]
        elevation: f64,
        #[serde(default = "default_fov")]
        fov_y: f64,
        #[serde(default = "default_width")]
        width: u32,
        #[serde(default = "default_height")]
        height: u32,
    },
}

impl CameraSpec {
    pub fn build(&self) -> Result<Camera, SceneError> {
        match self {
            CameraSpec::LookAt { eye, target, up, fov_y, width, height } => {
                Camera::look_at(Vector3::from(*eye), Vector3::from(*target), Vector3::from(*up), *fov_y, *width, *height)
            }
            CameraSpec::Orbit { target, radius, azimuth, elevation, fov_y, width, height } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(SceneError::InvalidCamera(format!("orbit radius must be > 0, got {radius}")));
                }
                let (az, el) = (azimuth.to_radians(), elevation.to_radians());
                let offset = Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * *radius;
                let target = Vector3::from(*target);
                Camera::look_at(target + offset, target, Vector3::y(), *fov_y, *width, *height)
            }
        }
    }

    /// Orbit around the center of `bounds`, far enough out to frame all of it,
    /// looking slightly down.
    pub fn overview(bounds: &Aabb) -> CameraSpec {
        let (target, diag) = if bounds.is_empty() { (Vector3::zeros(), 0.0) } else { (bounds.center(), (bounds.max - bounds.min).norm()) };
        CameraSpec::Orbit {
            target: target.into(),
            radius: (1.2 * diag).max(1.0),
            azimuth: 0.0,
            elevation: 25.0,
            fov_y: default_fov(),
            width: default_width(),
            height: default_height(),
        }
    }

    pub fn resolution(&self) -> (u32, u32) {
        match self {
            CameraSpec::LookAt { width, height, .. } | CameraSpec::Orbit { width, height, .. } => (*width, *height),
        }
    }

    pub fn with_resolution(&self, w: u32, h: u32) -> CameraSpec {
        let mut s = self.clone();
        match &mut s {
            CameraSpec::LookAt { width, height, .. } | CameraSpec::Orbit { width, height, .. } => {
                (*width, *height) = (w, h);
            }
        }
        s
    }
}

/// `count` poses evenly spaced in azimuth, starting at `start.azimuth`.
pub fn orbit_path(start: &CameraSpec, count: usize) -> Result<Vec<CameraSpec>, SceneError> {
    let CameraSpec::Orbit { azimuth, .. } = start else {
        return Err(SceneError::InvalidCamera("an orbit path needs an orbit camera".into()));
    };
    let base = *azimuth;
    Ok((0..count)
        .map(|i| {
            let mut s = start.clone();
            if let CameraSpec::Orbit { azimuth, .. } = &mut s {
                *azimuth = base + 360.0 * i as f64 / count as f64;
            }
            s
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_places_target_on_axis() {
        let cam = Camera::look_at(
            Vector3::new(1.0, 2.0, -8.0),
            Vector3::new(0.5, 0.0, 3.0),
            Vector3::new(0.0, 1.0, 0.0),
            60.0,
            64,
            48,
        )
        .unwrap();
        let v = cam.world_to_view(&Vector3::new(0.5, 0.0, 3.0));
        assert!(v.x.abs() < 1e-12 && v.y.abs() < 1e-12 && v.z > 0.0);
        assert!((cam.center() - Vector3::new(1.0, 2.0, -8.0)).norm() < 1e-12);
        // world up projects toward the top of the image
        let above = cam.world_to_view(&Vector3::new(0.5, 1.0, 3.0));
        assert!(cam.project_view(&above).y < 24.0);
    }

    #[test]
    fn rejects_bad_cameras() {
        let mut cam = Camera::look_at(Vector3::zeros(), Vector3::z(), Vector3::y(), 60.0, 8, 8).unwrap();
        cam.near = 2000.0;
        assert!(cam.validate().is_err());
        let mut cam2 = Camera::look_at(Vector3::zeros(), Vector3::z(), Vector3::y(), 60.0, 8, 8).unwrap();
        cam2.rotation[(0, 0)] = 1.1;
        assert!(cam2.validate().is_err());
        assert!(Camera::look_at(Vector3::zeros(), Vector3::y(), Vector3::y(), 60.0, 8, 8).is_err());
    }

    #[test]
    fn pixel_ray_hits_projected_pixel() {
        let cam = Camera::look_at(Vector3::new(0.0, 3.0, -5.0), Vector3::zeros(), Vector3::y(), 50.0, 40, 30).unwrap();
        let (o, d) = cam.pixel_ray(7, 21);
        let p = o + d * 4.2;
        let px = cam.project_view(&cam.world_to_view(&p));
        assert!((px - Vector2::new(7.5, 21.5)).norm() < 1e-9);
    }

    #[test]
    fn orbit_spec_looks_at_target() {
        let spec: CameraSpec = serde_json::from_str(
            r#"{"type": "orbit", "target": [1, 0, 2], "radius": 5, "azimuth": 90, "elevation": 30, "width": 64, "height": 32}"#,
        )
        .unwrap();
        let cam = spec.build().unwrap();
        let c = cam.center();
        let el = 30f64.to_radians();
        let expected = Vector3::new(1.0 + 5.0 * el.cos(), 5.0 * el.sin(), 2.0);
        assert!((c - expected).amax() < 1e-12);
        let v = cam.world_to_view(&Vector3::new(1.0, 0.0, 2.0));
        assert!(v.x.abs() < 1e-12 && v.y.abs() < 1e-12 && (v.z - 5.0).abs() < 1e-12);
        assert_eq!((cam.width, cam.height), (64, 32));
    }

    #[test]
    fn spec_documents() {
        let look: CameraSpec = serde_json::from_str(r#"{"type": "look_at", "eye": [0, 1, -4], "target": [0, 0, 0]}"#).unwrap();
        assert_eq!(look.resolution(), (640, 360));
        assert_eq!(look.with_resolution(32, 16).build().unwrap().width, 32);
        assert!(serde_json::from_str::<CameraSpec>(r#"{"type": "look_at", "eye": [0, 1, -4], "target": [0, 0, 0], "zoom": 2}"#).is_err());
        let bad = CameraSpec::Orbit { target: [0.0; 3], radius: 0.0, azimuth: 0.0, elevation: 0.0, fov_y: 50.0, width: 8, height: 8 };
        assert!(bad.build().is_err());
    }

    #[test]
    fn orbit_path_spacing() {
        let start = CameraSpec::Orbit { target: [0.0; 3], radius: 3.0, azimuth: 10.0, elevation: 20.0, fov_y: 50.0, width: 8, height: 8 };
        let path = orbit_path(&start, 8).unwrap();
        assert_eq!(path.len(), 8);
        for (i, s) in path.iter().enumerate() {
            let CameraSpec::Orbit { azimuth, .. } = s else { unreachable!() };
            assert!((azimuth - (10.0 + 45.0 * i as f64)).abs() < 1e-12);
            assert!((s.build().unwrap().center().norm() - 3.0).abs() < 1e-12);
        }
        let look = CameraSpec::LookAt { eye: [0.0, 0.0, -1.0], target: [0.0; 3], up: [0.0, 1.0, 0.0], fov_y: 50.0, width: 8, height: 8 };
        assert!(orbit_path(&look, 3).is_err());
    }

    #[test]
    fn overview_sees_every_corner() {
        let mut b = Aabb::empty();
        b.grow(&Vector3::new(-3.0, 0.0, -1.0));
        b.grow(&Vector3::new(2.0, 1.5, 4.0));
        let cam = CameraSpec::overview(&b).build().unwrap();
        for c in b.corners() {
            let v = cam.world_to_view(&c);
            assert!(v.z > 0.0);
            let p = cam.project_view(&v);
            assert!(p.x >= 0.0 && p.x <= cam.width as f64 && p.y >= 0.0 && p.y <= cam.height as f64, "{c:?} -> {p:?}");
        }
        assert!(CameraSpec::overview(&Aabb::empty()).build().is_ok());
    }
}
