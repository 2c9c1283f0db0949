//! Gerstner (trochoidal) waves with closed-form surface normals.
//!
//! Coordinates are plane-local: `x` and `z` span the water plane and `y` is the
//! plane normal. A surface point is parameterized by its rest position `xz`.

use std::f64::consts::PI;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::ClimateError;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GerstnerWave {
    /// Unit propagation direction on the plane.
    pub direction: [f64; 2],
    pub wavelength: f64,
    /// Q = k·A, in [0, 1].
    pub steepness: f64,
    /// Overrides the deep-water dispersion relation when set.
    #[serde(default)]
    pub phase_speed: Option<f64>,
    #[serde(default)]
    pub phase0: f64,
}

impl GerstnerWave {
    pub fn new(direction: [f64; 2], wavelength: f64, steepness: f64) -> Self {
        GerstnerWave { direction, wavelength, steepness, phase_speed: None, phase0: 0.0 }
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    /// Angular frequency; ω = √(g·k) unless a phase speed is set.
    pub fn angular_frequency(&self) -> f64 {
        let k = self.wavenumber();
        match self.phase_speed {
            Some(c) => c * k,
            None => (GRAVITY * k).sqrt(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.steepness / self.wavenumber()
    }

    fn dir(&self) -> Vector2<f64> {
        Vector2::new(self.direction[0], self.direction[1])
    }

}

pub fn validate_waves(waves: &[GerstnerWave]) -> Result<(), ClimateError> {
    let mut total = 0.0;
    for (i, w) in waves.iter().enumerate() {
        let field = |name: &str| format!("water.waves[{i}].{name}");
        if ((w.direction[0].powi(2) + w.direction[1].powi(2)).sqrt() - 1.0).abs() > 1e-6 {
            return Err(ClimateError::field(&field("direction"), "must be a unit vector"));
        }
        if !(w.wavelength > 0.0 && w.wavelength.is_finite()) {
            return Err(ClimateError::field(&field("wavelength"), "must be > 0"));
        }
        if !(0.0..=1.0).contains(&w.steepness) {
            return Err(ClimateError::field(&field("steepness"), "must lie in [0, 1]"));
        }
        if let Some(c) = w.phase_speed {
            if !c.is_finite() {
                return Err(ClimateError::field(&field("phase_speed"), "must be finite"));
            }
        }
        total += w.steepness;
    }
    if total > 1.0 + 1e-12 {
        return Err(ClimateError::field("water.waves", "sum of steepness must not exceed 1"));
    }
    Ok(())
}

/// One wave with its per-frame constants folded in.
#[derive(Debug, Clone, Copy)]
struct WaveTerm {
    dir: Vector2<f64>,
    k: f64,
    /// −ω·t + φ₀
    phase: f64,
    amplitude: f64,
    steepness: f64,
}

/// A wave set frozen at one instant, for evaluating many surface points.
#[derive(Debug, Clone)]
pub struct WaveField {
    terms: Vec<WaveTerm>,
}

/// Surface offset at a rest position with its partial derivatives along `x`
/// and `z` (the derivatives include the rest position itself).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePatch {
    pub offset: Vector3<f64>,
    pub dx: Vector3<f64>,
    pub dz: Vector3<f64>,
}

impl SurfacePatch {
    pub fn normal(&self) -> Vector3<f64> {
        self.dz.cross(&self.dx).normalize()
    }
}

impl WaveField {
    pub fn new(waves: &[GerstnerWave], t: f64) -> Self {
        let terms = waves
            .iter()
            .map(|w| WaveTerm {
                dir: w.dir(),
                k: w.wavenumber(),
                phase: -w.angular_frequency() * t + w.phase0,
                amplitude: w.amplitude(),
                steepness: w.steepness,
            })
            .collect();
        WaveField { terms }
    }

    /// Upper bound on the vertical offset.
    pub fn max_height(&self) -> f64 {
        self.terms.iter().map(|w| w.amplitude).sum()
    }

    pub fn is_flat(&self) -> bool {
        self.terms.iter().all(|w| w.steepness == 0.0)
    }

    pub fn displace(&self, xz: &Vector2<f64>) -> Vector3<f64> {
        let mut off = Vector3::zeros();
        for w in &self.terms {
            let (s, c) = (w.k * w.dir.dot(xz) + w.phase).sin_cos();
            off.x += w.amplitude * w.dir.x * c;
            off.y += w.amplitude * s;
            off.z += w.amplitude * w.dir.y * c;
        }
        off
    }

    pub fn patch(&self, xz: &Vector2<f64>) -> SurfacePatch {
        let mut offset = Vector3::zeros();
        let mut dx = Vector3::new(1.0, 0.0, 0.0);
        let mut dz = Vector3::new(0.0, 0.0, 1.0);
        for w in &self.terms {
            let (s, c) = (w.k * w.dir.dot(xz) + w.phase).sin_cos();
            let (d, a, q) = (w.dir, w.amplitude, w.steepness);
            offset += Vector3::new(a * d.x * c, a * s, a * d.y * c);
            dx += Vector3::new(-q * d.x * d.x * s, q * d.x * c, -q * d.x * d.y * s);
            dz += Vector3::new(-q * d.x * d.y * s, q * d.y * c, -q * d.y * d.y * s);
        }
        SurfacePatch { offset, dx, dz }
    }

    pub fn normal(&self, xz: &Vector2<f64>) -> Vector3<f64> {
        self.patch(xz).normal()
    }
}

/// Offset of the surface point with rest position `xz` at time `t`.
pub fn gerstner_displace(xz: &Vector2<f64>, t: f64, waves: &[GerstnerWave]) -> Vector3<f64> {
    WaveField::new(waves, t).displace(xz)
}

/// Unit normal of the displaced surface at rest position `xz`.
pub fn gerstner_normal(xz: &Vector2<f64>, t: f64, waves: &[GerstnerWave]) -> Vector3<f64> {
    WaveField::new(waves, t).normal(xz)
}
