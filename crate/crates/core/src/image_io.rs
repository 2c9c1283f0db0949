//! Linear RGB images and 8-bit PNG encoding with a 2.2 display gamma.

use std::io::Cursor;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

pub const DISPLAY_GAMMA: f64 = 2.2;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("image is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: u32,
    pub height: u32,
    /// Linear RGB, row-major.
    pub pixels: Vec<Vector3<f64>>,
}

impl Image {
    pub fn filled(width: u32, height: u32, rgb: Vector3<f64>) -> Self {
        Image { width, height, pixels: vec![rgb; width as usize * height as usize] }
    }

    pub fn mean(&self) -> Vector3<f64> {
        channel_mean(&self.pixels)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        channel_covariance(&self.pixels)
    }

    /// Encodes as 8-bit sRGB-ish PNG: clamp to [0, 1], then `c^(1/2.2)`.
    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut raw = Vec::with_capacity(self.pixels.len() * 3);
        for p in &self.pixels {
            for c in p.iter() {
                raw.push(to_display_u8(*c));
            }
        }
        let buf = image::RgbImage::from_raw(self.width, self.height, raw).ok_or(ImageError::Empty)?;
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Decodes any supported raster and converts to linear RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self, ImageError> {
        let img = image::load_from_memory(bytes)?.to_rgb8();
        if img.width() == 0 || img.height() == 0 {
            return Err(ImageError::Empty);
        }
        let pixels = img
            .pixels()
            .map(|p| Vector3::new(from_display_u8(p[0]), from_display_u8(p[1]), from_display_u8(p[2])))
            .collect();
        Ok(Image { width: img.width(), height: img.height(), pixels })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Image::decode(&std::fs::read(path)?)
    }
}

pub fn to_display_u8(linear: f64) -> u8 {
    let c = if linear.is_finite() { linear.clamp(0.0, 1.0) } else { 0.0 };
    (c.powf(1.0 / DISPLAY_GAMMA) * 255.0).round() as u8
}

pub fn from_display_u8(v: u8) -> f64 {
    (v as f64 / 255.0).powf(DISPLAY_GAMMA)
}

pub fn channel_mean(pixels: &[Vector3<f64>]) -> Vector3<f64> {
    if pixels.is_empty() {
        return Vector3::zeros();
    }
    pixels.iter().fold(Vector3::zeros(), |a, p| a + p) / pixels.len() as f64
}

/// Population covariance of the RGB channels.
pub fn channel_covariance(pixels: &[Vector3<f64>]) -> Matrix3<f64> {
    if pixels.is_empty() {
        return Matrix3::zeros();
    }
    let mean = channel_mean(pixels);
    let mut c = Matrix3::zeros();
    for p in pixels {
        let d = p - mean;
        c += d * d.transpose();
    }
    c / pixels.len() as f64
}
