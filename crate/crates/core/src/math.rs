//! Small fixed-size linear algebra helpers and a scalar-first quaternion type
//! with the vector-Jacobian products needed by the backward passes.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;

/// Quaternion stored scalar-first: `(w, x, y, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let a = axis.normalize() * (0.5 * angle).sin();
        Self::new((0.5 * angle).cos(), a.x, a.y, a.z)
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    pub fn add(self, o: Quat) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn normalized(self) -> Self {
        self.scale(1.0 / self.norm())
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self ⊗ o`.
    pub fn mul(self, o: Quat) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Rotation matrix of the normalized quaternion.
    pub fn to_matrix(self) -> Mat3 {
        let Quat { w, x, y, z } = self.normalized();
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_matrix() * v
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Pulls `dL/dR` back through `R = to_matrix(q)`, including the normalization.
pub fn quat_matrix_vjp(q: Quat, grad_r: &Mat3) -> Quat {
    let n = q.norm();
    let Quat { w, x, y, z } = q.scale(1.0 / n);
    let g = |i: usize, j: usize| grad_r[(i, j)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let unit_grad = Quat::new(dw, dx, dy, dz);
    let qn = Quat::new(w, x, y, z);
    normalize_vjp(qn, n, unit_grad)
}

/// Gradient of `q / |q|` given the gradient with respect to the normalized value.
pub fn normalize_vjp(q_unit: Quat, norm: f64, grad: Quat) -> Quat {
    let proj = q_unit.dot(grad);
    grad.add(q_unit.scale(-proj)).scale(1.0 / norm)
}

/// Gradients of `a ⊗ b` with respect to `a` and `b`.
pub fn quat_mul_vjp(a: Quat, b: Quat, grad: Quat) -> (Quat, Quat) {
    (grad.mul(b.conj()), a.conj().mul(grad))
}

/// Gradient of `v / |v|` with respect to `v`.
pub fn normalize3_vjp(v: Vec3, grad: Vec3) -> Vec3 {
    let n = v.norm();
    let u = v / n;
    (grad - u * u.dot(&grad)) / n
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}
