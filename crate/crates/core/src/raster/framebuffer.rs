use nalgebra::Vector3;

use super::RasterError;
use crate::image_io::Image;

/// Depth and evaluated opacity of one splat at one pixel, before transmittance
/// weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelSample {
    pub depth: f64,
    pub alpha: f64,
}

/// Per-pixel snow coverage recorded during compositing for the deferred snow pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SnowGBuffer {
    /// Sum of compositing weights of snow splats.
    pub weight: Vec<f64>,
    /// Weighted sum of sampled world-space snow normals.
    pub normal: Vec<Vector3<f64>>,
}

/// Output of a render: linear color, expected depth, coverage and optional
/// per-pixel sample lists.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBuffer {
    pub width: u32,
    pub height: u32,
    /// Linear RGB including the background contribution.
    pub color: Vec<Vector3<f64>>,
    /// Σ T_i α_i d_i, not normalized by coverage. Empty when unavailable.
    pub depth: Vec<f64>,
    /// 1 − final transmittance. Empty when unavailable.
    pub alpha_acc: Vec<f64>,
    pub background: Vector3<f64>,
    pub samples: Option<Vec<Vec<PixelSample>>>,
    pub snow: Option<SnowGBuffer>,
}

/// Coverage below which a pixel counts as empty sky.
pub const SKY_ALPHA: f64 = 1e-6;

impl FrameBuffer {
    pub fn new(width: u32, height: u32, background: Vector3<f64>) -> Self {
        let n = width as usize * height as usize;
        FrameBuffer {
            width,
            height,
            color: vec![background; n],
            depth: vec![0.0; n],
            alpha_acc: vec![0.0; n],
            background,
            samples: None,
            snow: None,
        }
    }

    /// Color-only buffer, e.g. from an image file. Depth-based passes reject it.
    pub fn from_image(image: &Image, background: Vector3<f64>) -> Self {
        FrameBuffer {
            width: image.width,
            height: image.height,
            color: image.pixels.clone(),
            depth: Vec::new(),
            alpha_acc: Vec::new(),
            background,
            samples: None,
            snow: None,
        }
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn has_depth(&self) -> bool {
        self.depth.len() == self.len() && self.alpha_acc.len() == self.len()
    }

    pub fn require_depth(&self) -> Result<(), RasterError> {
        if self.has_depth() {
            Ok(())
        } else {
            Err(RasterError::MissingBuffer("depth"))
        }
    }

    /// Expected surface depth given coverage, or `None` for sky pixels.
    pub fn surface_depth(&self, i: usize) -> Option<f64> {
        let a = self.alpha_acc[i];
        (a > SKY_ALPHA).then(|| self.depth[i] / a)
    }

    /// Color with the background term removed: Σ w_j c_j.
    pub fn foreground(&self, i: usize) -> Vector3<f64> {
        self.color[i] - self.background * (1.0 - self.alpha_acc[i])
    }

    pub fn pixel_samples(&self, x: u32, y: u32) -> Result<&[PixelSample], RasterError> {
        let samples = self.samples.as_ref().ok_or(RasterError::SamplesNotRetained)?;
        if x >= self.width || y >= self.height {
            return Err(RasterError::OutOfBounds(x, y));
        }
        Ok(&samples[self.index(x, y)])
    }

    pub fn to_image(&self) -> Image {
        Image { width: self.width, height: self.height, pixels: self.color.clone() }
    }
}
