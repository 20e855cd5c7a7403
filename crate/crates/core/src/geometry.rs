//! Geometric validation pipeline: remove lens distortion from the tracking
//! point, map it to the bird's-eye plane with a 3x3 perspective transform,
//! and convert the resulting x coordinate to a metric distance.

use crate::error::{Error, Result};
use crate::types::BBox;
use serde::{Deserialize, Serialize};

/// Brown-Conrady lens model: pinhole intrinsics plus radial (k1..k3) and
/// tangential (p1, p2) distortion coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistortionModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
    #[serde(default)]
    pub k3: f64,
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
}

impl DistortionModel {
    /// No distortion, unit focal length: pixel coordinates pass through.
    pub fn identity() -> Self {
        Self { fx: 1.0, fy: 1.0, cx: 0.0, cy: 0.0, k1: 0.0, k2: 0.0, k3: 0.0, p1: 0.0, p2: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Value("focal lengths must be positive".into()));
        }
        Ok(())
    }

    fn normalize(&self, pt: (f64, f64)) -> (f64, f64) {
        ((pt.0 - self.cx) / self.fx, (pt.1 - self.cy) / self.fy)
    }

    fn denormalize(&self, pt: (f64, f64)) -> (f64, f64) {
        (pt.0 * self.fx + self.cx, pt.1 * self.fy + self.cy)
    }

    /// Forward distortion in normalized coordinates.
    fn distort_normalized(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let r2 = x * x + y * y;
        let radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2 + self.k3 * r2 * r2 * r2;
        let xd = x * radial + 2.0 * self.p1 * x * y + self.p2 * (r2 + 2.0 * x * x);
        let yd = y * radial + self.p1 * (r2 + 2.0 * y * y) + 2.0 * self.p2 * x * y;
        (xd, yd)
    }
}

/// Apply the forward distortion model to an ideal pixel.
pub fn distort_point(pt: (f64, f64), model: &DistortionModel) -> (f64, f64) {
    model.denormalize(model.distort_normalized(model.normalize(pt)))
}

const UNDISTORT_MAX_ITERS: usize = 50;
const UNDISTORT_TOLERANCE_PX: f64 = 1e-6;

/// Invert the distortion model by fixed-point iteration: find the ideal pixel
/// whose forward distortion reproduces the observed one to within 1e-6 px.
pub fn undistort_point(pt: (f64, f64), model: &DistortionModel) -> Result<(f64, f64)> {
    model.validate()?;
    let (xd, yd) = model.normalize(pt);
    let (mut x, mut y) = (xd, yd);
    for _ in 0..UNDISTORT_MAX_ITERS {
        let r2 = x * x + y * y;
        let radial = 1.0 + model.k1 * r2 + model.k2 * r2 * r2 + model.k3 * r2 * r2 * r2;
        let dx = 2.0 * model.p1 * x * y + model.p2 * (r2 + 2.0 * x * x);
        let dy = model.p1 * (r2 + 2.0 * y * y) + 2.0 * model.p2 * x * y;
        if radial.abs() < 1e-12 {
            return Err(Error::Numeric("radial factor vanished during undistortion".into()));
        }
        x = (xd - dx) / radial;
        y = (yd - dy) / radial;

        let (fx, fy) = self_residual(model, (x, y), (xd, yd));
        if fx.hypot(fy) < UNDISTORT_TOLERANCE_PX {
            return Ok(model.denormalize((x, y)));
        }
    }
    Err(Error::Numeric(format!(
        "undistortion did not converge within {UNDISTORT_MAX_ITERS} iterations for {pt:?}"
    )))
}

/// Pixel-space residual of the current undistortion estimate.
fn self_residual(model: &DistortionModel, estimate: (f64, f64), observed: (f64, f64)) -> (f64, f64) {
    let (fx, fy) = model.distort_normalized(estimate);
    ((fx - observed.0) * model.fx, (fy - observed.1) * model.fy)
}

/// 3x3 projective map from the camera view to the bird's-eye plane.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerspectiveMatrix {
    /// Row-major.
    pub m: [[f64; 3]; 3],
}

impl PerspectiveMatrix {
    pub fn identity() -> Self {
        Self { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn validate(&self) -> Result<()> {
        if self.det().abs() <= 1e-12 {
            return Err(Error::Value(format!(
                "perspective matrix is singular (det {})",
                self.det()
            )));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<PerspectiveMatrix> {
        self.validate()?;
        let d = self.det();
        let m = &self.m;
        let cof = |r1: usize, c1: usize, r2: usize, c2: usize| m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1];
        Ok(PerspectiveMatrix {
            m: [
                [cof(1, 1, 2, 2) / d, -cof(0, 1, 2, 2) / d, cof(0, 1, 1, 2) / d],
                [-cof(1, 0, 2, 2) / d, cof(0, 0, 2, 2) / d, -cof(0, 0, 1, 2) / d],
                [cof(1, 0, 2, 1) / d, -cof(0, 0, 2, 1) / d, cof(0, 0, 1, 1) / d],
            ],
        })
    }
}

/// Project a point through the perspective matrix:
/// Z = ((m00 Vx + m01 Vy + m02) / D, (m10 Vx + m11 Vy + m12) / D) with
/// D = m20 Vx + m21 Vy + m22.
pub fn perspective_transform(v: (f64, f64), matrix: &PerspectiveMatrix) -> Result<(f64, f64)> {
    let m = &matrix.m;
    let d = m[2][0] * v.0 + m[2][1] * v.1 + m[2][2];
    if d.abs() <= 1e-12 {
        return Err(Error::Numeric(format!("point {v:?} maps to the horizon (denominator {d})")));
    }
    Ok((
        (m[0][0] * v.0 + m[0][1] * v.1 + m[0][2]) / d,
        (m[1][0] * v.0 + m[1][1] * v.1 + m[1][2]) / d,
    ))
}

/// Conversion from bird's-eye pixels to metric distance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DistanceCalib {
    /// Width of the bird's-eye frame in pixels.
    pub frame_width_px: f64,
    /// Meters represented by one bird's-eye pixel.
    pub meters_per_pixel: f64,
    /// Distance from the frame's exit edge to the range sensor.
    pub lidar_offset_m: f64,
}

impl Default for DistanceCalib {
    fn default() -> Self {
        Self { frame_width_px: 272.727, meters_per_pixel: 0.044, lidar_offset_m: 28.0 }
    }
}

impl DistanceCalib {
    pub fn validate(&self) -> Result<()> {
        if self.frame_width_px <= 0.0 || self.meters_per_pixel <= 0.0 || self.lidar_offset_m <= 0.0
        {
            return Err(Error::Value("distance calibration values must be positive".into()));
        }
        Ok(())
    }
}

/// Distance from the range sensor for a bird's-eye x coordinate; affine with
/// slope -meters_per_pixel, anchored at the frame's right edge. Values of
/// `zx` outside [0, frame width] extrapolate.
pub fn pixel_to_distance(zx: f64, calib: &DistanceCalib) -> f64 {
    (calib.frame_width_px - zx) * calib.meters_per_pixel + calib.lidar_offset_m
}

/// Full conversion for one detection box: take the center-right point (the
/// vehicle front), undistort it, project to the bird's-eye plane, convert to
/// meters.
pub fn track_to_distance(
    bbox: &BBox,
    model: &DistortionModel,
    matrix: &PerspectiveMatrix,
    calib: &DistanceCalib,
) -> Result<f64> {
    calib.validate()?;
    let v = bbox.center_right();
    let undistorted = undistort_point(v, model)?;
    let z = perspective_transform(undistorted, matrix)?;
    Ok(pixel_to_distance(z.0, calib))
}
