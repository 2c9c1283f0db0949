//! Absorption-only fog: Beer–Lambert transmittance over the rendered depth.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ClimateError;
use crate::raster::FrameBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmogParams {
    pub color: [f64; 3],
    /// Extinction per world unit.
    pub density: f64,
}

impl Default for SmogParams {
    fn default() -> Self {
        SmogParams { color: [0.6, 0.6, 0.62], density: 0.0 }
    }
}

impl SmogParams {
    pub fn validate(&self) -> Result<(), ClimateError> {
        if !(self.density >= 0.0 && self.density.is_finite()) {
            return Err(ClimateError::field("smog.density", "must be a finite value >= 0"));
        }
        if !self.color.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(ClimateError::field("smog.color", "components must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Transmittance between the camera and a surface at `depth`; sky is `None`.
pub fn smog_transmittance(density: f64, depth: Option<f64>) -> f64 {
    match depth {
        Some(d) => (-density * d).exp(),
        None => 0.0,
    }
}

/// Blends every pixel toward the smog color by its optical depth. Density zero
/// returns the input unchanged.
pub fn apply_smog(fb: &FrameBuffer, p: &SmogParams) -> Result<FrameBuffer, ClimateError> {
    fb.require_depth()?;
    p.validate()?;
    let mut out = fb.clone();
    if p.density == 0.0 {
        return Ok(out);
    }
    let smog = Vector3::from(p.color);
    out.color.par_iter_mut().enumerate().for_each(|(i, c)| {
        let t = smog_transmittance(p.density, fb.surface_depth(i));
        *c = *c * t + smog * (1.0 - t);
    });
    Ok(out)
}
