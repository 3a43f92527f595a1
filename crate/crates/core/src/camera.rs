//! Pinhole camera intrinsics and resolution scaling.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    Invalid(String),
}

/// Pinhole intrinsics in pixel units for an image of `width` x `height`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, CameraError> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::Invalid(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy)));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) || !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(CameraError::Invalid(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Project a camera-frame point (z > 0) to pixel coordinates
    /// `u = fx x/z + cx`, `v = fy y/z + cy`.
    pub fn project(&self, p: [f64; 3]) -> [f64; 2] {
        [self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy]
    }
}

/// Rescale intrinsics to a new resolution by the per-axis resolution ratio.
pub fn scale_intrinsics(k: &CameraIntrinsics, new_w: u32, new_h: u32) -> CameraIntrinsics {
    let sx = new_w as f64 / k.width as f64;
    let sy = new_h as f64 / k.height as f64;
    CameraIntrinsics {
        fx: k.fx * sx,
        fy: k.fy * sy,
        cx: k.cx * sx,
        cy: k.cy * sy,
        width: new_w,
        height: new_h,
    }
}
