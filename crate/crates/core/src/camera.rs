//! Pinhole camera model and the IBVS interaction matrix.
//!
//! Camera frame: z along the optical axis, x to the right, y down. Image
//! features entering the interaction matrix are expressed relative to the
//! principal point.

use nalgebra::{DMatrix, Matrix2x6, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::condition_number;

/// Threshold on `cond(L^T L)` above which a feature set is rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    /// Focal lengths in pixels.
    pub fu: f64,
    pub fv: f64,
    /// Principal point in pixels.
    pub cu: f64,
    pub cv: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fu: 640.0,
            fv: 640.0,
            cu: 640.0,
            cv: 360.0,
            width: 1280,
            height: 720,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.fu > 0.0 && self.fv > 0.0) {
            return Err("focal lengths must be positive".into());
        }
        if self.width == 0 || self.height == 0 {
            return Err("image size must be non-zero".into());
        }
        Ok(())
    }

    /// The interaction matrix assumes one focal length.
    pub fn has_square_pixels(&self) -> bool {
        (self.fu - self.fv).abs() <= 1e-9 * self.fu.abs().max(1.0)
    }

    /// Whether a continuous pixel coordinate lies strictly inside the frame.
    pub fn contains(&self, p: &PixelPoint) -> bool {
        p.u > 0.0 && p.v > 0.0 && p.u < self.width as f64 && p.v < self.height as f64
    }

    /// Unit-depth ray `(x, y, 1)` through a pixel.
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cu) / self.fu, (v - self.cv) / self.fv, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

pub fn project(p: &Vector3<f64>, k: &CameraIntrinsics) -> Result<PixelPoint> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(PixelPoint {
        u: k.cu + k.fu * p.x / p.z,
        v: k.cv + k.fv * p.y / p.z,
    })
}

/// 2x6 interaction block for one point feature at `(u0, v0)` relative to the
/// principal point, depth `z` and focal length `l`.
pub fn interaction_row(u0: f64, v0: f64, z: f64, l: f64) -> Result<Matrix2x6<f64>> {
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth(z));
    }
    Ok(Matrix2x6::new(
        -l / z,
        0.0,
        u0 / z,
        u0 * v0 / l,
        -(l + u0 * u0 / l),
        v0,
        0.0,
        -l / z,
        v0 / z,
        l + v0 * v0 / l,
        -u0 * v0 / l,
        -u0,
    ))
}

/// Stacked `2n x 6` interaction matrix, every feature evaluated at depth `z`.
pub fn interaction_matrix(
    features: &[PixelPoint],
    z: f64,
    k: &CameraIntrinsics,
) -> Result<DMatrix<f64>> {
    if !(z > 0.0) {
        return Err(Error::NonPositiveDepth(z));
    }
    let mut l = DMatrix::zeros(2 * features.len(), 6);
    for (i, f) in features.iter().enumerate() {
        let row = interaction_row(f.u - k.cu, f.v - k.cv, z, k.fu)?;
        l.fixed_view_mut::<2, 6>(2 * i, 0).copy_from(&row);
    }
    if features.len() < 3 {
        return Err(Error::DegenerateFeatures(f64::INFINITY));
    }
    // Conditioning is judged on the focal-normalized matrix so the threshold
    // does not depend on pixel units.
    let mut scaled = l.clone();
    for r in 0..scaled.nrows() {
        for c in 0..3 {
            scaled[(r, c)] *= z / k.fu;
        }
        for c in 3..6 {
            scaled[(r, c)] /= k.fu;
        }
    }
    let gram = scaled.transpose() * &scaled;
    let cond = condition_number(&gram);
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::DegenerateFeatures(cond));
    }
    Ok(l)
}
