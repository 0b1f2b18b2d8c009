use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec2, Vec3};

/// Pinhole camera. `rotation`/`translation` map world to camera space; the
/// camera looks down +z with +x right and +y down in the image.
///
/// Pixel `(i, j)` covers `[i, i+1) × [j, j+1)`; its center maps to the
/// normalized plane at `((i + 0.5 - cx) / fx, (j + 0.5 - cy) / fy)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major world-to-camera rotation.
    #[serde(rename = "R")]
    pub rotation: [f64; 9],
    #[serde(rename = "t")]
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, rotation: Mat3, translation: Vec3, width: usize, height: usize) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            rotation: [
                rotation[(0, 0)],
                rotation[(0, 1)],
                rotation[(0, 2)],
                rotation[(1, 0)],
                rotation[(1, 1)],
                rotation[(1, 2)],
                rotation[(2, 0)],
                rotation[(2, 1)],
                rotation[(2, 2)],
            ],
            translation: translation.into(),
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`, with a symmetric field of view
    /// (radians, horizontal) and the principal point at the image center.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64, width: usize, height: usize) -> Result<Self> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vec3::x());
            if right.norm() < 1e-9 {
                right = forward.cross(&Vec3::y());
            }
        }
        let right = right.normalize();
        // +y points down in the image.
        let down = forward.cross(&right);
        let rot = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(rot * eye);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        Self::new(f, f, 0.5 * width as f64, 0.5 * height as f64, rot, t, width, height)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        let r = self.rotation_matrix();
        if (r * r.transpose() - Mat3::identity()).amax() > 1e-6 {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        Ok(())
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        Mat3::from_row_slice(&self.rotation)
    }

    pub fn translation_vec(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation_matrix() * p + self.translation_vec()
    }

    /// Camera center in world space.
    pub fn center(&self) -> Vec3 {
        -(self.rotation_matrix().transpose() * self.translation_vec())
    }

    /// Normalized-plane coordinates of a pixel center.
    pub fn pixel_to_normalized(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new((i as f64 + 0.5 - self.cx) / self.fx, (j as f64 + 0.5 - self.cy) / self.fy)
    }

    /// Continuous pixel coordinates of a normalized-plane point.
    pub fn normalized_to_pixel(&self, n: Vec2) -> Vec2 {
        Vec2::new(n.x * self.fx + self.cx, n.y * self.fy + self.cy)
    }

    /// Continuous pixel coordinates and camera depth of a world point, or
    /// `None` when it lies behind `z_near`.
    pub fn project(&self, p: Vec3, z_near: f64) -> Option<(Vec2, f64)> {
        let c = self.world_to_camera(p);
        if c.z <= z_near {
            return None;
        }
        Some((self.normalized_to_pixel(Vec2::new(c.x / c.z, c.y / c.z)), c.z))
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }
}
