//! Gaussian splatting renderer with photorealistic color transfer applied in
//! spherical-harmonics space and deferred climate passes (smog, flood, snow).
//!
//! The crate is organised bottom-up:
//!
//! * [`scene`]: Gaussians, cameras, SH evaluation, scene files, synthetic scenes.
//! * [`raster`]: tile-based splatting into a [`raster::FrameBuffer`].
//! * [`style`]: affine color transforms applied uniformly across SH bands.
//! * [`climate`]: deferred smog, flood and snow passes.
//! * [`pipeline`]: the fixed pass order shared by the CLI and the service.

pub mod climate;
pub mod image_io;
pub mod pipeline;
pub mod raster;
pub mod scene;
pub mod style;

pub use image_io::Image;
pub use raster::{rasterize, FrameBuffer, RenderOptions};
pub use scene::{Camera, Gaussian, GaussianScene};
