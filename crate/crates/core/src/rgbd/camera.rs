use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RgbdError;

/// Pinhole intrinsics. Pixel `(u, v)` has its center at integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Full-frame intrinsics; requires the principal point inside the image.
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, RgbdError> {
        let k = Intrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        if !(0.0..width as f64).contains(&cx) || !(0.0..height as f64).contains(&cy) {
            return Err(RgbdError::InvalidIntrinsics(format!("principal point ({cx}, {cy}) outside {width}x{height}")));
        }
        Ok(k)
    }

    /// Checks what every use needs. Crops legitimately move the principal
    /// point outside the patch, so that is not checked here.
    pub fn validate(&self) -> Result<(), RgbdError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(RgbdError::InvalidIntrinsics(format!("focal lengths ({}, {})", self.fx, self.fy)));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(RgbdError::InvalidIntrinsics("non-finite principal point".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RgbdError::InvalidIntrinsics("zero image size".into()));
        }
        Ok(())
    }

    pub fn backproject_pixel(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

/// Camera-frame point to `(u, v, depth)`.
pub fn project(point: &Vector3<f64>, k: &Intrinsics) -> Result<(f64, f64, f64), RgbdError> {
    if !(point.z > 0.0) {
        return Err(RgbdError::BehindCamera(point.z));
    }
    Ok((k.fx * point.x / point.z + k.cx, k.fy * point.y / point.z + k.cy, point.z))
}
