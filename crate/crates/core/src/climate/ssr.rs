//! Screen-space reflections: a fixed-step march of a view-space ray through the
//! rendered depth buffer.

use nalgebra::{Vector2, Vector3};

use crate::raster::FrameBuffer;
use crate::scene::Camera;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsrOptions {
    pub steps: u32,
    /// Accepted depth mismatch at the located crossing (world units).
    pub bias: f64,
    /// Longest view-space distance marched.
    pub max_distance: f64,
    /// Bisection iterations used to locate a crossing between two steps.
    pub refine_steps: u32,
}

impl Default for SsrOptions {
    fn default() -> Self {
        SsrOptions { steps: 64, bias: 0.05, max_distance: 100.0, refine_steps: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsrHit {
    pub color: Vector3<f64>,
    pub hit: bool,
    /// Pixel where the ray met the depth buffer.
    pub pixel: Option<(u32, u32)>,
}

/// Surface depth per pixel with sky as +∞, the lookup table the march reads.
pub fn depth_lookup(fb: &FrameBuffer) -> Vec<f64> {
    (0..fb.len()).map(|i| fb.surface_depth(i).unwrap_or(f64::INFINITY)).collect()
}

/// Marches from `origin_view` along `dir_view`. Misses return the frame
/// background.
pub fn ssr_trace(fb: &FrameBuffer, camera: &Camera, origin_view: &Vector3<f64>, dir_view: &Vector3<f64>, opts: &SsrOptions) -> SsrHit {
    let depths = depth_lookup(fb);
    ssr_trace_with(fb, &depths, camera, origin_view, dir_view, opts)
}

pub(crate) fn ssr_trace_with(
    fb: &FrameBuffer,
    depths: &[f64],
    camera: &Camera,
    origin_view: &Vector3<f64>,
    dir_view: &Vector3<f64>,
    opts: &SsrOptions,
) -> SsrHit {
    let miss = SsrHit { color: fb.background, hit: false, pixel: None };
    let dir = dir_view.normalize();
    if !dir.iter().all(|v| v.is_finite()) || origin_view.z <= camera.near {
        return miss;
    }
    let mut length = opts.max_distance;
    if dir.z < 0.0 {
        length = length.min((origin_view.z - camera.near) / -dir.z);
    }
    if length <= 0.0 {
        return miss;
    }
    let end = origin_view + dir * length;
    let p0 = camera.project_view(origin_view);
    let p1 = camera.project_view(&end);
    let (iz0, iz1) = (1.0 / origin_view.z, 1.0 / end.z);
    let (w, h) = (fb.width as f64, fb.height as f64);

    // ray position at fraction s of the screen-space segment
    let at = |s: f64| -> (Vector2<f64>, f64) { (p0 + (p1 - p0) * s, 1.0 / (iz0 + (iz1 - iz0) * s)) };
    let lookup = |p: &Vector2<f64>| -> Option<(usize, u32, u32)> {
        if p.x < 0.0 || p.y < 0.0 || p.x >= w || p.y >= h {
            return None;
        }
        let (x, y) = (p.x as u32, p.y as u32);
        Some((fb.index(x, y), x, y))
    };

    let start = lookup(&p0);
    let mut prev_s = 0.0;
    for step in 1..=opts.steps {
        let s = step as f64 / opts.steps as f64;
        let (p, z) = at(s);
        let Some((i, _, _)) = lookup(&p) else {
            return miss;
        };
        if Some(i) == start.map(|t| t.0) {
            prev_s = s;
            continue;
        }
        if z >= depths[i] {
            // bisect between the last step in front and this one
            let (mut lo, mut hi) = (prev_s, s);
            for _ in 0..opts.refine_steps {
                let mid = 0.5 * (lo + hi);
                let (pm, zm) = at(mid);
                match lookup(&pm) {
                    Some((j, _, _)) if zm < depths[j] => lo = mid,
                    _ => hi = mid,
                }
            }
            let (ph, zh) = at(hi);
            if let Some((j, x, y)) = lookup(&ph) {
                if (zh - depths[j]).abs() <= opts.bias {
                    return SsrHit { color: fb.color[j], hit: true, pixel: Some((x, y)) };
                }
            }
        }
        prev_s = s;
    }
    miss
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn camera(size: u32, focal: f64) -> Camera {
        Camera::new(
            Matrix3::identity(),
            Vector3::zeros(),
            Vector2::new(focal, focal),
            Vector2::new(size as f64 / 2.0, size as f64 / 2.0),
            size,
            size,
            0.01,
            100.0,
        )
        .unwrap()
    }

    /// Frame with a wall at constant depth whose color encodes pixel coordinates.
    fn wall_frame(size: u32, depth: f64) -> FrameBuffer {
        let mut fb = FrameBuffer::new(size, size, Vector3::new(0.0, 0.0, 1.0));
        for y in 0..size {
            for x in 0..size {
                let i = fb.index(x, y);
                fb.color[i] = Vector3::new(x as f64, y as f64, 0.0);
                fb.depth[i] = depth;
                fb.alpha_acc[i] = 1.0;
            }
        }
        fb
    }

    #[test]
    fn ray_leaving_screen_misses() {
        let cam = camera(64, 32.0);
        let fb = wall_frame(64, 10.0);
        let hit = ssr_trace(&fb, &cam, &Vector3::new(0.0, 0.0, 5.0), &Vector3::new(1.0, 0.0, 0.0), &SsrOptions::default());
        assert!(!hit.hit);
        assert_eq!(hit.color, fb.background);
    }

    #[test]
    fn ray_into_empty_depth_misses() {
        let cam = camera(64, 32.0);
        let fb = FrameBuffer::new(64, 64, Vector3::new(0.3, 0.4, 0.5));
        let hit = ssr_trace(&fb, &cam, &Vector3::new(0.2, 0.1, 2.0), &Vector3::z(), &SsrOptions::default());
        assert!(!hit.hit);
        assert_eq!(hit.color, Vector3::new(0.3, 0.4, 0.5));
    }

    #[test]
    fn hits_wall_at_predicted_pixel() {
        let cam = camera(64, 32.0);
        let fb = wall_frame(64, 10.0);
        for (origin, dir) in [
            (Vector3::new(0.0, 1.0, 5.0), Vector3::new(0.3, -0.1, 1.0)),
            (Vector3::new(-2.0, -1.0, 4.0), Vector3::new(0.1, 0.25, 0.6)),
            (Vector3::new(1.0, 2.0, 8.0), Vector3::new(-0.5, -0.8, 0.3)),
        ] {
            // analytic intersection with the plane z = 10
            let d = dir.normalize();
            let s = (10.0 - origin.z) / d.z;
            let expected = cam.project_view(&(origin + d * s));
            let hit = ssr_trace(&fb, &cam, &origin, &dir, &SsrOptions::default());
            assert!(hit.hit, "no hit for {origin:?} {dir:?}");
            let (x, y) = hit.pixel.unwrap();
            assert!((x as f64 + 0.5 - expected.x).abs() <= 2.0 && (y as f64 + 0.5 - expected.y).abs() <= 2.0);
            assert_eq!(hit.color, Vector3::new(x as f64, y as f64, 0.0));
        }
    }

    #[test]
    fn passing_behind_a_thin_object_is_not_a_hit() {
        let cam = camera(64, 32.0);
        let mut fb = wall_frame(64, 30.0);
        // a narrow column at depth 3 across the ray's path
        for y in 0..64 {
            for x in 40..42 {
                let i = fb.index(x, y);
                fb.depth[i] = 3.0;
                fb.color[i] = Vector3::new(-1.0, -1.0, -1.0);
            }
        }
        let origin = Vector3::new(0.0, 0.0, 5.0);
        let dir = Vector3::new(0.4, 0.0, 1.0);
        let hit = ssr_trace(&fb, &cam, &origin, &dir, &SsrOptions { steps: 256, ..Default::default() });
        assert!(hit.hit);
        assert!(hit.color.x >= 0.0, "reflected the occluder");
    }
}
