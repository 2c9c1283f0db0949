use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use super::{ColorTransform, StyleError};
use crate::image_io::{channel_covariance, channel_mean};

/// Diagonal loading applied to degenerate statistics.
pub const REGULARIZATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Per-channel mean and standard deviation.
    MeanStd,
    /// Whitening by the content covariance, coloring by the style covariance.
    FullCovariance,
}

/// Mean and population covariance of a pixel set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StyleStats {
    pub mean: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl StyleStats {
    pub fn of(pixels: &[Vector3<f64>]) -> Self {
        StyleStats { mean: channel_mean(pixels), covariance: channel_covariance(pixels) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformEstimate {
    pub transform: ColorTransform,
    /// Set when a covariance or variance had to be diagonally loaded.
    pub regularized: bool,
}

/// Symmetric `C^(power)` for power ±½ with eigenvalues floored at
/// [`REGULARIZATION`]; the flag reports whether the floor was hit.
fn sym_power(c: &Matrix3<f64>, power: f64) -> (Matrix3<f64>, bool) {
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let mut loaded = false;
    let vals = eig.eigenvalues.map(|v| {
        if v < REGULARIZATION {
            loaded = true;
            v.max(0.0) + REGULARIZATION
        } else {
            v
        }
    });
    let d = Matrix3::from_diagonal(&vals.map(|v| v.powf(power)));
    (eig.eigenvectors * d * eig.eigenvectors.transpose(), loaded)
}

/// Closed-form affine map taking the content pixel statistics to the style
/// pixel statistics.
pub fn estimate_transform(
    content: &[Vector3<f64>],
    style: &[Vector3<f64>],
    method: EstimateMethod,
) -> Result<TransformEstimate, StyleError> {
    if content.len() < 2 {
        return Err(StyleError::TooFewPixels("content"));
    }
    if style.len() < 2 {
        return Err(StyleError::TooFewPixels("style"));
    }
    let c = StyleStats::of(content);
    let s = StyleStats::of(style);
    let (matrix, regularized) = match method {
        EstimateMethod::MeanStd => {
            let mut loaded = false;
            let mut diag = Vector3::zeros();
            for k in 0..3 {
                let mut vc = c.covariance[(k, k)];
                if vc < REGULARIZATION {
                    vc = vc.max(0.0) + REGULARIZATION;
                    loaded = true;
                }
                diag[k] = (s.covariance[(k, k)].max(0.0) / vc).sqrt();
            }
            (Matrix3::from_diagonal(&diag), loaded)
        }
        EstimateMethod::FullCovariance => {
            let (whiten, loaded) = sym_power(&c.covariance, -0.5);
            let color = style_sqrt(&s.covariance);
            (color * whiten, loaded)
        }
    };
    let transform = ColorTransform::new(matrix, s.mean - matrix * c.mean)?;
    Ok(TransformEstimate { transform, regularized })
}

/// Square root of the style covariance; only negative round-off is clamped, so
/// a degenerate style stays degenerate.
fn style_sqrt(c: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new((c + c.transpose()) * 0.5);
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}
