//! Real spherical harmonics up to degree 3, in the coefficient order and sign
//! convention used by public Gaussian splatting scene files.

use nalgebra::Vector3;

use super::SceneError;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: u8 = 3;
pub const SH_COEFFS: usize = 16;

/// Offset added to the evaluated color so zero coefficients map to mid-gray.
pub const SH_DC_OFFSET: f64 = 0.5;

pub const fn coeffs_for_degree(degree: u8) -> usize {
    (degree as usize + 1) * (degree as usize + 1)
}

pub fn degree_from_coeffs(n: usize) -> Option<u8> {
    match n {
        1 => Some(0),
        4 => Some(1),
        9 => Some(2),
        16 => Some(3),
        _ => None,
    }
}

/// Per-row normalization constant of the basis polynomial, with the sign the
/// evaluation applies. Row 0 is the DC constant.
pub const BASIS_CONSTANTS: [f64; SH_COEFFS] = [
    SH_C0, -SH_C1, SH_C1, -SH_C1, SH_C2[0], SH_C2[1], SH_C2[2], SH_C2[3], SH_C2[4], SH_C3[0],
    SH_C3[1], SH_C3[2], SH_C3[3], SH_C3[4], SH_C3[5], SH_C3[6],
];

/// Sixteen RGB coefficient rows: DC first, then bands 1..=3 in (l, m) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShCoeffs(pub [Vector3<f64>; SH_COEFFS]);

impl Default for ShCoeffs {
    fn default() -> Self {
        Self::zeros()
    }
}

impl ShCoeffs {
    pub fn zeros() -> Self {
        ShCoeffs([Vector3::zeros(); SH_COEFFS])
    }

    /// Coefficients whose evaluation is `rgb` from every direction.
    pub fn from_base_color(rgb: Vector3<f64>) -> Self {
        let mut sh = Self::zeros();
        sh.0[0] = rgb.map(|c| (c - SH_DC_OFFSET) / SH_C0);
        sh
    }

    pub fn rows(&self) -> &[Vector3<f64>; SH_COEFFS] {
        &self.0
    }

    /// Highest band with a nonzero coefficient.
    pub fn effective_degree(&self) -> u8 {
        let last = self.0.iter().rposition(|r| r.iter().any(|&v| v != 0.0));
        match last {
            None | Some(0) => 0,
            Some(i) if i < 4 => 1,
            Some(i) if i < 9 => 2,
            Some(_) => 3,
        }
    }

    /// Zeroes every row above `degree`.
    pub fn truncate(&mut self, degree: u8) {
        for row in self.0.iter_mut().skip(coeffs_for_degree(degree.min(MAX_SH_DEGREE))) {
            *row = Vector3::zeros();
        }
    }
}

/// The sixteen basis values Y_i(dir) including their normalization constants.
/// Entries above `degree` are zero.
pub fn basis(dir: &Vector3<f64>, degree: u8) -> [f64; SH_COEFFS] {
    let mut y = [0.0; SH_COEFFS];
    y[0] = SH_C0;
    if degree == 0 {
        return y;
    }
    let (x, yy, z) = (dir.x, dir.y, dir.z);
    y[1] = -SH_C1 * yy;
    y[2] = SH_C1 * z;
    y[3] = -SH_C1 * x;
    if degree == 1 {
        return y;
    }
    let (xx, y2, zz) = (x * x, yy * yy, z * z);
    let (xy, yz, xz) = (x * yy, yy * z, x * z);
    y[4] = SH_C2[0] * xy;
    y[5] = SH_C2[1] * yz;
    y[6] = SH_C2[2] * (2.0 * zz - xx - y2);
    y[7] = SH_C2[3] * xz;
    y[8] = SH_C2[4] * (xx - y2);
    if degree == 2 {
        return y;
    }
    y[9] = SH_C3[0] * yy * (3.0 * xx - y2);
    y[10] = SH_C3[1] * xy * z;
    y[11] = SH_C3[2] * yy * (4.0 * zz - xx - y2);
    y[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * y2);
    y[13] = SH_C3[4] * x * (4.0 * zz - xx - y2);
    y[14] = SH_C3[5] * z * (xx - y2);
    y[15] = SH_C3[6] * x * (xx - 3.0 * y2);
    y
}

/// Evaluates view-dependent color without validating `dir`. The result is not
/// clamped.
pub fn eval_sh_unchecked(sh: &ShCoeffs, dir: &Vector3<f64>, degree: u8) -> Vector3<f64> {
    let degree = degree.min(MAX_SH_DEGREE);
    let y = basis(dir, degree);
    let n = coeffs_for_degree(degree);
    let mut c = Vector3::repeat(SH_DC_OFFSET);
    for (row, yi) in sh.0.iter().zip(y.iter()).take(n) {
        c += row * *yi;
    }
    c
}

/// Evaluates view-dependent color for a unit direction.
pub fn eval_sh(sh: &ShCoeffs, dir: &Vector3<f64>, degree: u8) -> Result<Vector3<f64>, SceneError> {
    let norm = dir.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
        return Err(SceneError::NonUnitDirection(norm));
    }
    if degree > MAX_SH_DEGREE {
        return Err(SceneError::ShDegree(degree));
    }
    Ok(eval_sh_unchecked(sh, dir, degree))
}
