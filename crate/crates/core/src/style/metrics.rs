use nalgebra::Vector3;

use super::{apply_transform, sh_to_unified, ColorTransform, StyleError};
use crate::image_io::{channel_covariance, channel_mean, Image};
use crate::raster::{rasterize, RenderOptions};
use crate::scene::{Camera, GaussianScene};

/// Mean absolute difference over pixels and channels.
fn image_l1(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<f64, StyleError> {
    if a.len() != b.len() {
        return Err(StyleError::CountMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs().sum()).sum();
    Ok(sum / (3 * a.len()) as f64)
}

/// Mean absolute difference of the unified coefficient rows `rows` over all
/// Gaussians and channels.
fn coefficient_l1(a: &GaussianScene, b: &GaussianScene, rows: usize) -> Result<f64, StyleError> {
    if a.len() != b.len() {
        return Err(StyleError::CountMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (ga, gb) in a.gaussians().iter().zip(b.gaussians()) {
        let (ua, ub) = (sh_to_unified(&ga.sh), sh_to_unified(&gb.sh));
        for (ra, rb) in ua.0.iter().zip(ub.0.iter()).take(rows) {
            sum += (ra - rb).abs().sum();
        }
    }
    Ok(sum / (3 * rows * a.len()) as f64)
}

/// Base-color L1 between matching Gaussians plus the mean image L1 over the
/// given views.
pub fn content_consistency(
    a: &GaussianScene,
    b: &GaussianScene,
    cameras: &[Camera],
    opts: &RenderOptions,
) -> Result<f64, StyleError> {
    let dc = coefficient_l1(a, b, 1)?;
    let mut render = 0.0;
    for cam in cameras {
        let (ra, rb) = (rasterize(a, cam, opts)?, rasterize(b, cam, opts)?);
        render += image_l1(&ra.color, &rb.color)?;
    }
    if !cameras.is_empty() {
        render /= cameras.len() as f64;
    }
    Ok(dc + render)
}

/// Σ over channels of |Δmean| + |Δstd| (population statistics).
pub fn style_distance(image: &Image, style: &Image) -> f64 {
    let (ma, mb) = (channel_mean(&image.pixels), channel_mean(&style.pixels));
    let (ca, cb) = (channel_covariance(&image.pixels), channel_covariance(&style.pixels));
    (0..3).map(|k| (ma[k] - mb[k]).abs() + (ca[(k, k)].max(0.0).sqrt() - cb[(k, k)].max(0.0).sqrt()).abs()).sum()
}

/// Coefficient and render L1 after a round trip through `t` and its inverse.
pub fn cycle_error(
    scene: &GaussianScene,
    t: &ColorTransform,
    camera: &Camera,
    reference: &Image,
    opts: &RenderOptions,
) -> Result<f64, StyleError> {
    cycle_error_with_inverse(scene, t, &t.invert()?, camera, reference, opts)
}

/// [`cycle_error`] with an explicitly supplied inverse.
pub fn cycle_error_with_inverse(
    scene: &GaussianScene,
    t: &ColorTransform,
    inverse: &ColorTransform,
    camera: &Camera,
    reference: &Image,
    opts: &RenderOptions,
) -> Result<f64, StyleError> {
    let cycled = apply_transform(&apply_transform(scene, t)?, inverse)?;
    let coeff = coefficient_l1(&cycled, scene, crate::scene::sh::SH_COEFFS)?;
    let render = rasterize(&cycled, camera, opts)?;
    Ok(coeff + image_l1(&render.color, &reference.pixels)?)
}
