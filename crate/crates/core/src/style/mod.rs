//! Color transfer on Gaussians: an affine RGB map applied to every SH band at
//! once in a rescaled ("unified") coefficient space, so the transformed scene
//! renders as the transformed colors from every viewpoint.

mod estimate;
mod file;
mod metrics;

use nalgebra::{Matrix3, SMatrix, Vector3};
use thiserror::Error;

use crate::raster::RasterError;
use crate::scene::sh::{ShCoeffs, BASIS_CONSTANTS, SH_COEFFS, SH_DC_OFFSET};
use crate::scene::{GaussianScene, SceneError};

pub use estimate::{estimate_transform, EstimateMethod, StyleStats, TransformEstimate, REGULARIZATION};
pub use file::{load_transform, parse_transform, transform_to_json};
pub use metrics::{content_consistency, cycle_error, cycle_error_with_inverse, style_distance};

/// Rank of the factored form.
pub const FACTOR_RANK: usize = 16;
/// Smallest |det M| treated as invertible.
pub const MIN_DETERMINANT: f64 = 1e-9;

pub type FactorP = SMatrix<f64, 3, FACTOR_RANK>;
pub type FactorT = SMatrix<f64, FACTOR_RANK, FACTOR_RANK>;
pub type FactorQ = SMatrix<f64, FACTOR_RANK, 3>;

#[derive(Debug, Error)]
pub enum StyleError {
    #[error("transform matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("invalid transform: {0}")]
    Invalid(String),
    #[error("need at least 2 pixels in the {0} set")]
    TooFewPixels(&'static str),
    #[error("scenes differ in size: {0} vs {1}")]
    CountMismatch(usize, usize),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-row scale between SH coefficients and unified coefficients, with the
/// evaluation offset folded into the DC row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedShMap {
    pub lambda: [f64; SH_COEFFS],
    pub dc_offset: f64,
}

impl Default for UnifiedShMap {
    fn default() -> Self {
        UnifiedShMap { lambda: BASIS_CONSTANTS, dc_offset: SH_DC_OFFSET }
    }
}

impl UnifiedShMap {
    pub fn to_unified(&self, sh: &ShCoeffs) -> ShCoeffs {
        let mut u = ShCoeffs::zeros();
        for (i, row) in sh.0.iter().enumerate() {
            u.0[i] = row * self.lambda[i];
        }
        u.0[0].add_scalar_mut(self.dc_offset);
        u
    }

    pub fn to_sh(&self, u: &ShCoeffs) -> ShCoeffs {
        let mut sh = ShCoeffs::zeros();
        for (i, row) in u.0.iter().enumerate() {
            sh.0[i] = row / self.lambda[i];
        }
        sh.0[0] = (u.0[0].add_scalar(-self.dc_offset)) / self.lambda[0];
        sh
    }
}

/// Row 0 becomes the view-independent base color.
pub fn sh_to_unified(sh: &ShCoeffs) -> ShCoeffs {
    UnifiedShMap::default().to_unified(sh)
}

pub fn unified_to_sh(u: &ShCoeffs) -> ShCoeffs {
    UnifiedShMap::default().to_sh(u)
}

/// Rank-16 factorization `M = P·T·Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Factored {
    pub p: FactorP,
    pub t: FactorT,
    pub q: FactorQ,
}

impl Factored {
    pub fn product(&self) -> Matrix3<f64> {
        self.p * self.t * self.q
    }
}

/// Affine color map `c ↦ M·c + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorTransform {
    pub matrix: Matrix3<f64>,
    pub bias: Vector3<f64>,
    pub factored: Option<Factored>,
}

impl Default for ColorTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl ColorTransform {
    pub fn identity() -> Self {
        ColorTransform { matrix: Matrix3::identity(), bias: Vector3::zeros(), factored: None }
    }

    pub fn new(matrix: Matrix3<f64>, bias: Vector3<f64>) -> Result<Self, StyleError> {
        let t = ColorTransform { matrix, bias, factored: None };
        t.validate()?;
        Ok(t)
    }

    pub fn from_factors(factors: Factored, bias: Vector3<f64>) -> Result<Self, StyleError> {
        let t = ColorTransform { matrix: factors.product(), bias, factored: Some(factors) };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), StyleError> {
        if !self.matrix.iter().chain(self.bias.iter()).all(|v| v.is_finite()) {
            return Err(StyleError::Invalid("non-finite entries".into()));
        }
        if let Some(f) = &self.factored {
            let err = (f.product() - self.matrix).amax();
            if !(err <= 1e-6) {
                return Err(StyleError::Invalid(format!("matrix differs from P·T·Q by {err:e}")));
            }
        }
        Ok(())
    }

    pub fn apply_color(&self, c: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * c + self.bias
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &ColorTransform) -> ColorTransform {
        ColorTransform { matrix: self.matrix * inner.matrix, bias: self.matrix * inner.bias + self.bias, factored: None }
    }

    pub fn invert(&self) -> Result<ColorTransform, StyleError> {
        let det = self.matrix.determinant();
        if !(det.abs() > MIN_DETERMINANT) {
            return Err(StyleError::Singular(det.abs()));
        }
        let inv = self.matrix.try_inverse().ok_or(StyleError::Singular(det.abs()))?;
        Ok(ColorTransform { matrix: inv, bias: -(inv * self.bias), factored: None })
    }

    /// Transforms one coefficient set: affine on the base color, linear on
    /// the view-dependent rows.
    pub fn apply_sh(&self, sh: &ShCoeffs) -> ShCoeffs {
        let map = UnifiedShMap::default();
        let mut u = map.to_unified(sh);
        u.0[0] = self.apply_color(&u.0[0]);
        for row in u.0.iter_mut().skip(1) {
            *row = self.matrix * *row;
        }
        map.to_sh(&u)
    }
}

/// Scene with every Gaussian's colors transformed. Geometry and opacity are
/// untouched.
pub fn apply_transform(scene: &GaussianScene, t: &ColorTransform) -> Result<GaussianScene, StyleError> {
    t.validate()?;
    Ok(scene.map_gaussians(|g| {
        let mut g = g.clone();
        g.sh = t.apply_sh(&g.sh);
        g
    })?)
}

pub fn invert_transform(t: &ColorTransform) -> Result<ColorTransform, StyleError> {
    t.invert()
}

pub fn compose(outer: &ColorTransform, inner: &ColorTransform) -> ColorTransform {
    outer.compose(inner)
}

/// Maps the scene into the content space, then colorizes it with the style map.
pub fn two_stage_pipeline(
    scene: &GaussianScene,
    content_transform: &ColorTransform,
    style_transform: &ColorTransform,
) -> Result<GaussianScene, StyleError> {
    apply_transform(&apply_transform(scene, content_transform)?, style_transform)
}
