use serde::{Deserialize, Serialize};

use super::Mesh;
use crate::error::{Error, Result};
use crate::math::{quat_matrix_vjp, Mat3, Quat, Vec3};

/// Global scale, rotation and translation: `v' = S R(q) v + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalTransform {
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
}

impl Default for GlobalTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Gradient of a loss with respect to the transform parameters.
#[derive(Clone, Copy, Debug, Default)]
pub struct TransformGrad {
    pub scale: Vec3,
    pub rotation: Quat,
    pub translation: Vec3,
}

impl GlobalTransform {
    pub fn identity() -> Self {
        Self {
            scale: [1.0; 3],
            rotation: Quat::IDENTITY.to_array(),
            translation: [0.0; 3],
        }
    }

    pub fn new(scale: Vec3, rotation: Quat, translation: Vec3) -> Self {
        Self {
            scale: scale.into(),
            rotation: rotation.to_array(),
            translation: translation.into(),
        }
    }

    pub fn scale_vec(&self) -> Vec3 {
        Vec3::from(self.scale)
    }

    pub fn quat(&self) -> Quat {
        Quat::from_array(self.rotation)
    }

    pub fn translation_vec(&self) -> Vec3 {
        Vec3::from(self.translation)
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.quat();
        if !q.is_finite() || (q.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidTransform(format!("rotation {:?} is not unit", self.rotation)));
        }
        if self.scale.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidTransform(format!("scale {:?} is not positive", self.scale)));
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTransform("translation is not finite".into()));
        }
        Ok(())
    }

    /// `M = S R(q)`.
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&self.scale_vec()) * self.quat().to_matrix()
    }

    /// `M⁻¹ = R(q)ᵀ S⁻¹`.
    pub fn inverse_matrix(&self) -> Result<Mat3> {
        self.validate()?;
        let inv_s = Vec3::from(self.scale).map(|s| 1.0 / s);
        Ok(self.quat().to_matrix().transpose() * Mat3::from_diagonal(&inv_s))
    }

    pub fn apply_point(&self, v: Vec3) -> Vec3 {
        self.matrix() * v + self.translation_vec()
    }

    pub fn inverse_point(&self, v: Vec3) -> Result<Vec3> {
        Ok(self.inverse_matrix()? * (v - self.translation_vec()))
    }

    /// Pulls gradients on transformed vertices back to the template vertices
    /// (`Mᵀ g`) and the transform parameters.
    pub fn backward(&self, template: &[Vec3], grad_world: &[Vec3]) -> (Vec<Vec3>, TransformGrad) {
        let m = self.matrix();
        let mt = m.transpose();
        let mut grad_m = Mat3::zeros();
        let mut grad_t = Vec3::zeros();
        let mut grad_v = Vec::with_capacity(template.len());
        for (v, g) in template.iter().zip(grad_world) {
            grad_m += g * v.transpose();
            grad_t += g;
            grad_v.push(mt * g);
        }
        let r = self.quat().to_matrix();
        // M = S R: dS_kk = (dM Rᵀ)_kk, dR = S dM.
        let gmr = grad_m * r.transpose();
        let grad_s = Vec3::new(gmr[(0, 0)], gmr[(1, 1)], gmr[(2, 2)]);
        let grad_r = Mat3::from_diagonal(&self.scale_vec()) * grad_m;
        let grad_q = quat_matrix_vjp(self.quat(), &grad_r);
        (
            grad_v,
            TransformGrad {
                scale: grad_s,
                rotation: grad_q,
                translation: grad_t,
            },
        )
    }
}

/// Globally transformed vertex positions; the mesh is left untouched.
pub fn apply_global_transform(mesh: &Mesh, transform: &GlobalTransform) -> Result<Vec<Vec3>> {
    transform.validate()?;
    let m = transform.matrix();
    let t = transform.translation_vec();
    Ok(mesh.vertices.iter().map(|v| m * v + t).collect())
}
