//! Scene data model: Gaussian primitives, cameras and scene file I/O.

mod camera;
pub mod ply;
pub mod sh;
pub mod synthetic;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

pub use camera::{orbit_path, Camera, CameraSpec};
pub use sh::{eval_sh, ShCoeffs};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("unsupported SH degree {0}, expected 0..=3")]
    ShDegree(u8),
    #[error("invalid gaussian: {0}")]
    InvalidGaussian(String),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("scene sh_degree {declared} but gaussian {index} has coefficients up to degree {found}")]
    DegreeMismatch { declared: u8, index: usize, found: u8 },
    #[error("scene spec is empty")]
    EmptySpec,
    #[error("scene file: {0}")]
    Load(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a splat gets its color at render time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplatKind {
    /// View-dependent color from the SH coefficients.
    #[default]
    Radiance,
    /// Snow cover: lit in the deferred snow pass instead of SH evaluation.
    Snow,
}

/// A single anisotropic 3D Gaussian. Opacity and scale are stored activated.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub scale: Vector3<f64>,
    pub opacity: f64,
    pub sh: ShCoeffs,
    pub kind: SplatKind,
}

impl Gaussian {
    pub fn new(
        center: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
        scale: Vector3<f64>,
        opacity: f64,
        sh: ShCoeffs,
    ) -> Result<Self, SceneError> {
        let g = Gaussian { center, rotation, scale, opacity, sh, kind: SplatKind::Radiance };
        g.validate()?;
        Ok(g)
    }

    /// Isotropic, view-independent Gaussian; handy for tests and synthetic scenes.
    pub fn isotropic(center: Vector3<f64>, radius: f64, opacity: f64, rgb: Vector3<f64>) -> Self {
        Gaussian {
            center,
            rotation: UnitQuaternion::identity(),
            scale: Vector3::repeat(radius),
            opacity,
            sh: ShCoeffs::from_base_color(rgb),
            kind: SplatKind::Radiance,
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let q = self.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(SceneError::InvalidGaussian(format!("rotation norm {}", q.norm())));
        }
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(SceneError::InvalidGaussian("non-finite center".into()));
        }
        if !self.scale.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(SceneError::InvalidGaussian(format!("scale {:?} not strictly positive", self.scale)));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(SceneError::InvalidGaussian(format!("opacity {} outside [0, 1]", self.opacity)));
        }
        if self.sh.0.iter().any(|r| !r.iter().all(|v| v.is_finite())) {
            return Err(SceneError::InvalidGaussian("non-finite SH coefficient".into()));
        }
        Ok(())
    }

    /// World-space covariance R·S·Sᵀ·Rᵀ.
    pub fn covariance(&self) -> Matrix3<f64> {
        covariance(&self.rotation, &self.scale)
    }
}

pub fn covariance(rotation: &UnitQuaternion<f64>, scale: &Vector3<f64>) -> Matrix3<f64> {
    let m = rotation.to_rotation_matrix().into_inner() * Matrix3::from_diagonal(scale);
    m * m.transpose()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vector3::repeat(f64::INFINITY), max: Vector3::repeat(f64::NEG_INFINITY) }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn grow(&mut self, p: &Vector3<f64>) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        if self.is_empty() {
            Vector3::zeros()
        } else {
            (self.min + self.max) * 0.5
        }
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vector3::new(a.x, a.y, a.z),
            Vector3::new(b.x, a.y, a.z),
            Vector3::new(a.x, b.y, a.z),
            Vector3::new(b.x, b.y, a.z),
            Vector3::new(a.x, a.y, b.z),
            Vector3::new(b.x, a.y, b.z),
            Vector3::new(a.x, b.y, b.z),
            Vector3::new(b.x, b.y, b.z),
        ]
    }
}

/// An ordered, immutable set of Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    gaussians: Vec<Gaussian>,
    sh_degree: u8,
    bounds: Aabb,
}

impl GaussianScene {
    pub fn new(gaussians: Vec<Gaussian>, sh_degree: u8) -> Result<Self, SceneError> {
        if sh_degree > sh::MAX_SH_DEGREE {
            return Err(SceneError::ShDegree(sh_degree));
        }
        let mut bounds = Aabb::empty();
        for (index, g) in gaussians.iter().enumerate() {
            g.validate().map_err(|e| SceneError::InvalidGaussian(format!("gaussian {index}: {e}")))?;
            let found = g.sh.effective_degree();
            if found > sh_degree {
                return Err(SceneError::DegreeMismatch { declared: sh_degree, index, found });
            }
            bounds.grow(&g.center);
        }
        Ok(GaussianScene { gaussians, sh_degree, bounds })
    }

    pub fn empty() -> Self {
        GaussianScene { gaussians: Vec::new(), sh_degree: 0, bounds: Aabb::empty() }
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub fn into_gaussians(self) -> Vec<Gaussian> {
        self.gaussians
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// New scene with `extra` appended after the existing Gaussians.
    pub fn extended(&self, extra: impl IntoIterator<Item = Gaussian>) -> Result<Self, SceneError> {
        let mut all = self.gaussians.clone();
        all.extend(extra);
        GaussianScene::new(all, self.sh_degree)
    }

    /// New scene with every Gaussian passed through `f`. Geometry must stay valid.
    pub fn map_gaussians(&self, f: impl Fn(&Gaussian) -> Gaussian + Sync + Send) -> Result<Self, SceneError> {
        use rayon::prelude::*;
        let gaussians: Vec<Gaussian> = self.gaussians.par_iter().map(f).collect();
        let degree = gaussians.iter().map(|g| g.sh.effective_degree()).max().unwrap_or(0).max(self.sh_degree);
        GaussianScene::new(gaussians, degree)
    }
}

pub use ply::{load_scene, read_scene, save_scene, write_scene};

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Quaternion, SymmetricEigen};
    use proptest::prelude::*;

    #[test]
    fn identity_covariance() {
        let c = covariance(&UnitQuaternion::identity(), &Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(c, Matrix3::identity());
    }

    #[test]
    fn diagonal_covariance() {
        let c = covariance(&UnitQuaternion::identity(), &Vector3::new(2.0, 1.0, 1.0));
        assert_eq!(c, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)));
    }

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    proptest! {
        #[test]
        fn covariance_eigenvalues_are_squared_scales(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
            sx in 0.01f64..3.0, sy in 0.01f64..3.0, sz in 0.01f64..3.0,
        ) {
            let q = Quaternion::new(w, x, y, z);
            prop_assume!(q.norm() > 0.1);
            let rot = UnitQuaternion::from_quaternion(q);
            let s = Vector3::new(sx, sy, sz);
            let c = covariance(&rot, &s);
            prop_assert!((c - c.transpose()).amax() < 1e-12);
            // oracle: rotate diag(s²) with the explicit rotation matrix
            let r = rot.to_rotation_matrix().into_inner();
            let expected = r * Matrix3::from_diagonal(&s.component_mul(&s)) * r.transpose();
            prop_assert!((c - expected).amax() < 1e-9);
            let eig = sorted(SymmetricEigen::new(c).eigenvalues.iter().copied().collect());
            let want = sorted(vec![sx * sx, sy * sy, sz * sz]);
            for (a, b) in eig.iter().zip(want.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!(eig[0] > 0.0);
        }
    }

    #[test]
    fn rejects_invalid_gaussians() {
        let ok = Gaussian::isotropic(Vector3::zeros(), 1.0, 0.5, Vector3::repeat(0.5));
        assert!(ok.validate().is_ok());
        let mut g = ok.clone();
        g.opacity = 1.5;
        assert!(g.validate().is_err());
        let mut g = ok.clone();
        g.scale.y = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn bounds_contain_every_center() {
        let gs: Vec<_> = [(-1.0, 2.0, 3.0), (4.0, -5.0, 0.5), (0.0, 0.0, 9.0)]
            .iter()
            .map(|&(x, y, z)| Gaussian::isotropic(Vector3::new(x, y, z), 0.1, 0.5, Vector3::repeat(0.2)))
            .collect();
        let scene = GaussianScene::new(gs, 0).unwrap();
        let b = scene.bounds();
        assert_eq!(b.min, Vector3::new(-1.0, -5.0, 0.5));
        assert_eq!(b.max, Vector3::new(4.0, 2.0, 9.0));
        assert!(scene.gaussians().iter().all(|g| b.contains(&g.center)));
    }

    #[test]
    fn degree_must_cover_coefficients() {
        let mut g = Gaussian::isotropic(Vector3::zeros(), 0.1, 0.5, Vector3::repeat(0.2));
        g.sh.0[5].x = 0.3;
        assert!(matches!(
            GaussianScene::new(vec![g.clone()], 1),
            Err(SceneError::DegreeMismatch { found: 2, .. })
        ));
        assert!(GaussianScene::new(vec![g], 2).is_ok());
    }
}
