use alloc::format;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::pose::Vec3;
use crate::{Error, Result};

/// Pinhole depth camera. Camera frame: x right, y down, z along the
/// optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub max_depth: f64,
}

impl Camera {
    /// Square pixels, principal point at the image center.
    pub fn from_hfov(width: usize, height: usize, hfov_deg: f64, max_depth: f64) -> Result<Self> {
        let half = (hfov_deg.to_radians() * 0.5).tan();
        let f = width as f64 * 0.5 / half;
        let cam = Camera {
            width,
            height,
            fx: f,
            fy: f,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            max_depth,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// 64×32 pixels, 90° horizontal field of view.
    pub fn desk(max_depth: f64) -> Self {
        Self::from_hfov(64, 32, 90.0, max_depth).expect("desk camera is valid")
    }

    /// 256×128 pixels, 90° horizontal field of view.
    pub fn paper(max_depth: f64) -> Self {
        Self::from_hfov(256, 128, 90.0, max_depth).expect("paper camera is valid")
    }

    /// Same field of view at a different resolution.
    pub fn rescaled(&self, width: usize, height: usize) -> Result<Self> {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let cam = Camera {
            width,
            height,
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            max_depth: self.max_depth,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::Scenario(format!(
                "camera must be at least 8x8 pixels, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Scenario("focal lengths must be positive".into()));
        }
        if !(self.max_depth > 0.0 && self.max_depth.is_finite()) {
            return Err(Error::Scenario("max_depth must be positive".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Ray through the center of pixel `(col, row)` with unit z component,
    /// so the ray parameter equals z-depth.
    pub fn ray_direction(&self, col: usize, row: usize) -> Vec3 {
        Vec3::new(
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }

    /// Pixel containing the projection of a camera-frame point, if any.
    pub fn project(&self, p: &Vec3) -> Option<(usize, usize)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (col, row) = (u.floor() as usize, v.floor() as usize);
        (col < self.width && row < self.height).then_some((col, row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_intrinsics() {
        let cam = Camera::desk(2.0);
        assert_eq!((cam.width, cam.height), (64, 32));
        assert!((cam.fx - 32.0).abs() < 1e-12);
        assert_eq!((cam.cx, cam.cy), (32.0, 16.0));
        let d = cam.ray_direction(63, 0);
        assert!((d.x - 31.5 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_tiny_or_bad_cameras() {
        assert!(Camera::from_hfov(4, 32, 90.0, 1.0).is_err());
        assert!(Camera::from_hfov(64, 32, 90.0, 0.0).is_err());
        let mut cam = Camera::desk(1.0);
        cam.fy = -1.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn projection_inverts_ray() {
        let cam = Camera::desk(2.0);
        for (c, r) in [(0, 0), (10, 20), (63, 31)] {
            let p = cam.ray_direction(c, r) * 0.8;
            assert_eq!(cam.project(&p), Some((c, r)));
        }
    }
}
