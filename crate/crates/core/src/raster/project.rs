use nalgebra::Matrix2x3;

use crate::geometry::Camera;
use crate::math::{Mat2, Mat3, Vec2, Vec3};

/// Pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct PixelBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelBox {
    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn full(camera: &Camera) -> Self {
        Self {
            x0: 0,
            y0: 0,
            x1: camera.width,
            y1: camera.height,
        }
    }

    /// Pixels whose centers fall in the continuous pixel-space rectangle.
    pub fn from_extent(camera: &Camera, lo: Vec2, hi: Vec2) -> Self {
        let clamp = |v: f64, max: usize| -> usize {
            if v.is_nan() || v <= 0.0 {
                0
            } else {
                (v as usize).min(max)
            }
        };
        Self {
            x0: clamp((lo.x - 0.5).ceil(), camera.width),
            y0: clamp((lo.y - 0.5).ceil(), camera.height),
            x1: clamp((hi.x - 0.5).floor() + 1.0, camera.width),
            y1: clamp((hi.y - 0.5).floor() + 1.0, camera.height),
        }
    }

    pub fn overlaps(&self, other: &PixelBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }
}

/// A 3D Gaussian after perspective projection, in normalized image-plane
/// coordinates.
#[derive(Clone, Copy, Debug)]
pub struct ProjectedSplat {
    /// Camera-space mean `(X, Y, Z)`.
    pub mean: Vec3,
    /// `(X/Z, Y/Z)`.
    pub mu: Vec2,
    pub depth: f64,
    pub jacobian: Matrix2x3<f64>,
    /// Camera-space covariance.
    pub cov: Mat3,
    /// `JΣJᵀ + blur`.
    pub lambda: Mat2,
    pub lambda_inv: Mat2,
    pub bbox: PixelBox,
}

/// Projection Jacobian `(1/Z)[[1, 0, -u], [0, 1, -v]]`.
pub fn projection_jacobian(mean: &Vec3) -> Matrix2x3<f64> {
    let z = mean.z;
    let u = mean.x / z;
    let v = mean.y / z;
    Matrix2x3::new(1.0 / z, 0.0, -u / z, 0.0, 1.0 / z, -v / z)
}

/// Projects a camera-space Gaussian. `blur` is added to the diagonal of the
/// image covariance (normalized-plane units). Returns `None` when the mean is
/// behind `z_near` or the image covariance is not positive definite. The
/// bounding box is left empty.
pub fn project_camera_space(mean: Vec3, cov: Mat3, blur: Vec2, z_near: f64) -> Option<ProjectedSplat> {
    if !(mean.z > z_near) {
        return None;
    }
    let jacobian = projection_jacobian(&mean);
    let mut lambda = jacobian * cov * jacobian.transpose();
    lambda[(0, 0)] += blur.x;
    lambda[(1, 1)] += blur.y;
    let sym = 0.5 * (lambda[(0, 1)] + lambda[(1, 0)]);
    lambda[(0, 1)] = sym;
    lambda[(1, 0)] = sym;
    let det = lambda[(0, 0)] * lambda[(1, 1)] - sym * sym;
    if !(det > 0.0) || !(lambda[(0, 0)] > 0.0) {
        return None;
    }
    let lambda_inv = Mat2::new(lambda[(1, 1)], -sym, -sym, lambda[(0, 0)]) / det;
    Some(ProjectedSplat {
        mean,
        mu: Vec2::new(mean.x / mean.z, mean.y / mean.z),
        depth: mean.z,
        jacobian,
        cov,
        lambda,
        lambda_inv,
        bbox: PixelBox::default(),
    })
}

/// Blur of `blur_px2` square pixels expressed on the normalized plane.
pub fn normalized_blur(camera: &Camera, blur_px2: f64) -> Vec2 {
    Vec2::new(blur_px2 / (camera.fx * camera.fx), blur_px2 / (camera.fy * camera.fy))
}

/// Projects a world-space Gaussian through `camera`, including its 3σ pixel
/// bounding box.
pub fn project_splat(mean_world: Vec3, cov_world: &Mat3, camera: &Camera, blur_px2: f64, z_near: f64) -> Option<ProjectedSplat> {
    let w = camera.rotation_matrix();
    let mean = camera.world_to_camera(mean_world);
    let cov = w * cov_world * w.transpose();
    let mut proj = project_camera_space(mean, cov, normalized_blur(camera, blur_px2), z_near)?;
    let half = Vec2::new(3.0 * proj.lambda[(0, 0)].sqrt(), 3.0 * proj.lambda[(1, 1)].sqrt());
    let lo = camera.normalized_to_pixel(proj.mu - half);
    let hi = camera.normalized_to_pixel(proj.mu + half);
    proj.bbox = PixelBox::from_extent(camera, lo, hi);
    Some(proj)
}

/// `E = ½ rᵀΛ⁻¹r` with `r = μ − x`.
pub fn gaussian_energy(proj: &ProjectedSplat, x: Vec2) -> f64 {
    let r = proj.mu - x;
    0.5 * r.dot(&(proj.lambda_inv * r))
}

/// Energy and its derivatives at one image-plane point.
#[derive(Clone, Copy, Debug)]
pub struct EnergyGrad {
    pub energy: f64,
    /// `Λ⁻¹r`.
    pub g: Vec2,
    /// `ΣJᵀg`.
    pub h: Vec3,
    /// `(∂E/∂u, ∂E/∂v, ∂E/∂d)`.
    pub d_uvd: Vec3,
    /// `∂E/∂(X, Y, Z)`.
    pub d_mean: Vec3,
    /// `∂E/∂Σ` (camera space, symmetric).
    pub d_cov: Mat3,
}

/// Analytic derivatives of the Gaussian energy with respect to the
/// camera-space mean and covariance.
///
/// `∂E/∂u = g₁(1 + h₃/d)`, `∂E/∂v = g₂(1 + h₃/d)` and `∂E/∂d = kᵀΣk / d`
/// with `k = Jᵀg`; without blur the last one reduces to `2E/d`.
pub fn energy_gradient(proj: &ProjectedSplat, x: Vec2) -> EnergyGrad {
    let r = proj.mu - x;
    let g = proj.lambda_inv * r;
    let energy = 0.5 * r.dot(&g);
    let k = proj.jacobian.transpose() * g;
    let h = proj.cov * k;
    let d = proj.depth;
    let factor = 1.0 + h.z / d;
    let d_uvd = Vec3::new(g.x * factor, g.y * factor, k.dot(&h) / d);
    let (u, v) = (proj.mu.x, proj.mu.y);
    let d_mean = Vec3::new(d_uvd.x / d, d_uvd.y / d, d_uvd.z - (u * d_uvd.x + v * d_uvd.y) / d);
    EnergyGrad {
        energy,
        g,
        h,
        d_uvd,
        d_mean,
        d_cov: -0.5 * k * k.transpose(),
    }
}
